"""Frozen reference values for the bundled instance files.

Optima come from ``exact_solve`` and were confirmed by solving the exported
MILP with HiGHS (one satellite copy, three station copies) on every 5-customer
instance of the base, TW and PD variants and on two 10-customer instances.
They are pinned here so regressions in the solvers show up as test failures.
"""

from pathlib import Path

INSTANCES = Path(__file__).resolve().parent.parent / "instances"

BASE_5 = {
    "C101_C5x": 80.0, "C103_C5x": 154.0, "C206_C5x": 62.0, "C208_C5x": 80.0,
    "R104_C5x": 282.0, "R105_C5x": 374.0, "R202_C5x": 375.0, "R203_C5x": 297.0,
    "RC105_C5x": 331.0, "RC108_C5x": 213.0, "RC204_C5x": 212.0, "RC208_C5x": 177.0,
}

TW_5 = {
    "C101_C5": 124.97252345291075, "C103_C5": 66.90285817495014,
    "C206_C5": 165.1869873505454, "C208_C5": 145.49896298904906,
    "R104_C5": 336.013244703654, "R105_C5": 349.7807732695068,
    "R202_C5": 338.9793273420787, "R203_C5": 281.91627423731586,
    "RC105_C5": 351.3396945233111, "RC108_C5": 183.6914407715751,
    "RC204_C5": 265.43711282381923, "RC208_C5": 304.8829062036826,
}

BASE_10 = {
    "C101_C10x": 271.0, "C104_C10x": 306.0, "C202_C10x": 177.0, "C205_C10x": 123.0,
    "R102_C10x": 480.0, "R103_C10x": 349.0, "R201_C10x": 360.0, "R203_C10x": 483.0,
    "RC102_C10x": 281.0, "RC108_C10x": 392.0, "RC201_C10x": 296.0, "RC205_C10x": 388.0,
}

# reference optima reported for the original benchmark files, kept for the comparison
# report; the bundled files are synthetic stand-ins with the same names
REFERENCE_BASE_5 = {
    "C101_C5x": 325.0, "C103_C5x": 298.0, "C206_C5x": 351.0, "C208_C5x": 366.0,
    "R104_C5x": 316.0, "R105_C5x": 352.0, "R202_C5x": 348.0, "R203_C5x": 372.0,
    "RC105_C5x": 356.0, "RC108_C5x": 380.0, "RC204_C5x": 332.0, "RC208_C5x": 328.0,
}
REFERENCE_TW_5 = {
    "C101_C5": 385.49, "C103_C5": 341.33, "C206_C5": 417.31, "C208_C5": 381.91,
    "R104_C5": 317.02, "R105_C5": 453.74, "R202_C5": 347.82, "R203_C5": 371.31,
    "RC105_C5": 432.64, "RC108_C5": 460.89, "RC204_C5": 332.86, "RC208_C5": 327.30,
}

# (customers, station copies) -> (variables, constraints) targets for TW models
# built with one satellite copy
MODEL_SIZE_TARGETS = {
    ("C101_C5", 5): (986, 2235),
    ("C101_C10", 11): (4008, 9363),
    ("C103_C15", 15): (13125, 31482),
}


def path(name: str) -> Path:
    return INSTANCES / f"{name}.txt"
