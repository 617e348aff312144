"""
Bundled documents
=================

Experiment and game documents shipped with the package. Address them by
name::

    from eqsel.data import bundled_config
    path = bundled_config("treasure_fig1")

"""

from importlib import resources

BUNDLED_EXPERIMENTS = (
    "treasure_fig1",
    "staghunt_fig2_marden",
    "staghunt_fig2_loglinear",
    "staghunt_pradelski_young",
    "treasure_analyze",
)
BUNDLED_GAMES = ("treasure_game",)

_data_ref = resources.files("eqsel.data")


def bundled_config(name: str) -> str:
    """Path of a bundled YAML document.

    Raises
    ------
    ValueError
        ``name`` is not bundled
    """
    if name not in BUNDLED_EXPERIMENTS + BUNDLED_GAMES:
        raise ValueError(
            f"no bundled document '{name}', expected one of "
            f"{BUNDLED_EXPERIMENTS + BUNDLED_GAMES}"
        )
    return (_data_ref / f"{name}.yaml").as_posix()
