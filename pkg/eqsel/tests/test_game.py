import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_equal

from eqsel.exceptions import ShapeError
from eqsel.game import (
    NormalFormGame,
    Policy,
    StochasticGame,
    q_stage_game,
    stage_game,
    validate_game,
)
from eqsel.games import (
    BUILTIN_GAMES,
    builtin_game,
    random_game,
    random_identical_interest_game,
    random_interdependent_game,
    random_potential_game,
)
from eqsel.policy import check_interdependence, verify_potential
from eqsel.utils import ActionCodec, argmax_set, argmin_set, get_protocol


class TestActionCodec(object):
    def test_agent_zero_slowest(self):
        codec = ActionCodec((2, 3))
        assert codec.encode((1, 0)) == 3
        assert codec.decode(5) == (1, 2)
        assert codec.n_joint == 6

    @given(
        st.lists(st.integers(1, 4), min_size=1, max_size=4).flatmap(
            lambda counts: st.tuples(
                st.just(counts), st.integers(0, int(np.prod(counts)) - 1)
            )
        )
    )
    def test_decode_inverts_encode(self, data):
        counts, index = data
        codec = ActionCodec(counts)
        assert codec.encode(codec.decode(index)) == index

    def test_deviation_table(self):
        codec = ActionCodec((2, 3))
        dev = codec.deviation_table
        # agent 1 replaces its action in (1, 0)
        assert_equal(dev[1][3], [3, 4, 5])
        # agent 0 replaces its action in (1, 2)
        assert_equal(dev[0][5], [2, 5])

    def test_format(self):
        assert ActionCodec((2, 2)).format(2) == "1,0"

    @pytest.mark.parametrize("actions", [(2, 0), (0,), (0, -1)])
    def test_encode_rejects(self, actions):
        with pytest.raises(ValueError):
            ActionCodec((2, 2)).encode(actions)

    def test_rejects_empty_counts(self):
        with pytest.raises(ValueError, match="at least one agent"):
            ActionCodec(())


class TestHelpers(object):
    def test_argmax_set_ties(self):
        assert argmax_set([1.0, 2.0, 2.0 - 1e-12, 0.0]) == (1, 2)

    def test_argmin_set_ignores_inf(self):
        assert argmin_set([np.inf, 3.0, 3.0, np.nan]) == (1, 2)
        assert argmin_set([np.inf]) == ()

    @pytest.mark.parametrize(
        "url, protocol",
        [
            ("run.zarr", "file"),
            ("s3://bucket/run.zarr", "s3"),
            ("simplecache::s3://bucket/run.zarr", "simplecache"),
        ],
    )
    def test_get_protocol(self, url, protocol):
        assert get_protocol(url) == protocol


class TestNormalFormGame(object):
    def test_shape_checked(self):
        with pytest.raises(ShapeError, match="payoffs must have shape"):
            NormalFormGame((2, 2), np.zeros((2, 3)))

    def test_non_finite(self):
        payoffs = np.zeros((2, 4))
        payoffs[0, 1] = np.nan
        with pytest.raises(ValueError, match="finite"):
            NormalFormGame((2, 2), payoffs)

    def test_from_tensors(self):
        r1 = np.array([[3.0, 0.0], [5.0, 1.0]])
        r2 = r1.T
        nfg = NormalFormGame.from_tensors([r1, r2])
        assert nfg.payoff(0, 2) == 5.0
        assert nfg.payoff(1, 1) == 5.0
        assert_equal(nfg.tensor(0), r1)

    def test_prisoners_dilemma_nash(self):
        r1 = np.array([[3.0, 0.0], [5.0, 1.0]])
        nfg = NormalFormGame.from_tensors([r1, r1.T])
        assert nfg.pure_nash() == [3]
        assert nfg.pure_nash(strict=True) == [3]
        assert_allclose(nfg.welfare(), [6.0, 5.0, 5.0, 2.0])

    def test_weak_nash(self, coordination):
        flat = NormalFormGame.identical((2, 2), [1.0, 1.0, 0.0, 1.0])
        assert 0 in flat.pure_nash()
        assert 0 not in flat.pure_nash(strict=True)
        assert coordination.pure_nash(strict=True) == [0, 3]

    def test_best_gain(self, coordination):
        assert_allclose(coordination.best_gain(0), [0.0, 1.0, 0.5, 0.0])


class TestStochasticGame(object):
    @pytest.mark.parametrize("name", BUILTIN_GAMES)
    def test_builtins_validate(self, name):
        game = builtin_game(name)
        assert validate_game(game).ok
        assert game.horizon == 2

    def test_unknown_builtin(self):
        with pytest.raises(ValueError, match="unknown built-in game"):
            builtin_game("chess")

    def test_treasure_reachable(self, treasure):
        assert_equal(
            treasure.reachable(),
            [[True, False, False, False], [False, True, True, True]],
        )

    def test_treasure_stage_game(self, treasure):
        nfg = stage_game(treasure, 1, "B")
        assert_allclose(nfg.payoffs[0], [1.0, 0.0, 0.0, 2.0])
        assert treasure.is_identical_interest()

    def test_stag_hunt_is_general_sum(self, stag):
        assert not stag.is_identical_interest()
        assert_allclose(stage_game(stag, 0, "init").payoffs[1], [0, 2, 0, 1])

    def test_state_index(self, treasure):
        assert treasure.state_index("O") == 2
        assert treasure.state_index(3) == 3
        with pytest.raises(ValueError, match="unknown state"):
            treasure.state_index("Z")
        with pytest.raises(ValueError, match="outside"):
            treasure.state_index(4)

    def test_check_stage(self, treasure):
        with pytest.raises(ValueError, match="stage 2 outside"):
            stage_game(treasure, 2, "init")

    def test_shapes_checked(self):
        with pytest.raises(ShapeError, match="transitions must have shape"):
            StochasticGame(
                (2, 2), 1, ["s"], np.zeros((2, 1, 1, 4)), np.ones((1, 1, 4)),
                [1.0],
            )

    def test_duplicate_states(self):
        with pytest.raises(ValueError, match="unique"):
            StochasticGame(
                (2,), 1, ["s", "s"], np.zeros((1, 1, 2, 2)),
                np.full((1, 2, 2, 2), 0.5), [0.5, 0.5],
            )

    def test_q_stage_game(self, treasure):
        Q = np.array(treasure.rewards)
        nfg = q_stage_game(Q, treasure.codec, 0, 0)
        assert_allclose(nfg.payoffs, treasure.rewards[:, 0, 0])


class TestValidateGame(object):
    def _game(self, rewards=None, P=None, rho=None, allow=False):
        rewards = np.zeros((1, 1, 2, 2)) if rewards is None else rewards
        P = np.full((1, 2, 2, 2), 0.5) if P is None else P
        rho = np.array([1.0, 0.0]) if rho is None else rho
        return StochasticGame((2,), 1, ["a", "b"], rewards, P, rho, allow)

    def test_ok(self):
        assert validate_game(self._game()).ok

    def test_row_not_stochastic(self):
        P = np.full((1, 2, 2, 2), 0.5)
        P[0, 1, 0] = [0.5, 0.6]
        report = validate_game(self._game(P=P))
        assert not report.ok
        assert report.issues[0].field == "transitions"
        assert report.issues[0].coords == (0, 1, 0)

    def test_reward_range(self):
        rewards = np.zeros((1, 1, 2, 2))
        rewards[0, 0, 1, 1] = 2.0
        report = validate_game(self._game(rewards=rewards))
        assert report.fields() == ["rewards"]
        assert validate_game(self._game(rewards=rewards, allow=True)).ok

    def test_rho(self):
        report = validate_game(self._game(rho=np.array([0.5, 0.4])))
        assert report.fields() == ["rho"]
        assert len(report) == 1

    def test_never_raises(self):
        rewards = np.full((1, 1, 2, 2), np.inf)
        report = validate_game(self._game(rewards=rewards))
        assert len(report) == 4
        assert report.to_dict()["ok"] is False


class TestPolicy(object):
    def test_from_actions(self):
        policy = Policy.from_actions([[1, 0]], 4)
        assert policy.is_deterministic
        assert_equal(policy.actions, [[1, 0]])

    def test_rows_must_be_distributions(self):
        with pytest.raises(ValueError, match="probability distribution"):
            Policy(np.full((1, 1, 2), 0.6))

    def test_stochastic_has_no_actions(self):
        with pytest.raises(TypeError):
            Policy.uniform(1, 1, 2).actions

    def test_check_shape(self, treasure):
        with pytest.raises(ShapeError):
            Policy.uniform(1, 4, 4).check_shape(treasure)


class TestGenerators(object):
    def test_random_game_valid(self, small_random_game):
        assert validate_game(small_random_game).ok

    @pytest.mark.parametrize("counts", [(2, 2), (3, 3)])
    def test_random_potential_game(self, counts):
        rng = np.random.default_rng(5)
        for _ in range(5):
            nfg = random_potential_game(rng, counts)
            assert verify_potential(nfg).exists
            assert nfg.payoffs.min() >= 0.0
            assert nfg.payoffs.max() <= 1.0

    def test_random_interdependent_game(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            nfg = random_interdependent_game(rng)
            assert check_interdependence(nfg).holds
            assert len(argmax_set(nfg.welfare())) == 1

    def test_random_identical_interest_game(self):
        game = random_identical_interest_game(np.random.default_rng(7))
        assert game.is_identical_interest()
        assert validate_game(game).ok
