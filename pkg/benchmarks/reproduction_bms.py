import numpy as np

from eqsel.config import ExperimentConfig
from eqsel.data import bundled_config
from eqsel.framework import exact_pi_eps, run_algorithm1, run_algorithm2
from eqsel.games import builtin_game, random_potential_game
from eqsel.resistance import validate_corollary
from eqsel.rules import LogLinearRule


"""
1. Activate the devtools/asv_env.yaml environment

2. To run, use:

Development:

    asv run -q -v -e <branch>^! > bm.log &

Full run:

    asv run -v -e <branch>^! > bm.log &

Full-scale reproductions take minutes; they are benchmarks, not unit tests.
"""


class FrameworkRunTime(object):
    """One full-length run of each bundled figure config."""

    params = [
        "treasure_fig1",
        "staghunt_fig2_marden",
        "staghunt_fig2_loglinear",
    ]
    param_names = ["config"]
    timeout = 2400.0

    def setup(self, config):
        self.config = ExperimentConfig.from_yaml(bundled_config(config))
        self.game = builtin_game(self.config.game)

    def time_run(self, config):
        """Benchmark a single seeded run"""
        run_algorithm1(
            self.game,
            self.config.rule,
            self.config.eps_list[0],
            self.config.iterations,
            seed=self.config.seed,
            stride=self.config.stride,
        )


class SampledCriticTime(object):
    """Algorithm 2 on the treasure game."""

    params = [10**3, 10**4]
    param_names = ["iterations"]
    timeout = 2400.0

    def setup(self, iterations):
        self.game = builtin_game("treasure_dig")

    def time_run(self, iterations):
        run_algorithm2(self.game, "log_linear", 1e-2, iterations, seed=0)


class ExactPolicyTime(object):

    params = (["treasure_dig", "stag_hunt"], [1e-2, 1e-5])
    param_names = ["game", "eps"]

    def setup(self, game, eps):
        self.game = builtin_game(game)

    def time_exact_pi_eps(self, game, eps):
        exact_pi_eps(self.game, "log_linear", eps)


class PotentialBatchTime(object):
    """Potential maximization check over random potential games."""

    params = [(2, 2), (3, 3)]
    param_names = ["action_counts"]
    timeout = 600.0

    def setup(self, action_counts):
        rng = np.random.default_rng(0)
        self.games = [
            random_potential_game(rng, action_counts) for _ in range(10)
        ]
        self.rule = LogLinearRule(2)

    def time_validate(self, action_counts):
        for nfg in self.games:
            validate_corollary(self.rule, nfg, "potential_max")
