"""Reference configurations: the two benchmark studies and their published values.

Study 1 is a normal-mean change from a mean in [-1, -0.5] to mean 0, with
thresholds set for a worst-case detection delay of about 20.  Study 2 is a
change in an exponential rate from [0.8, 1] to [2, 3], with thresholds set
for a long ARL of about 600 at rate 1.
"""

from __future__ import annotations

from dataclasses import dataclass

from .detectors import DetectorConfig
from .families import EXPONENTIAL, NORMAL
from .hypotheses import ParamSet, constant, optimizer_from, pair_close

# named threshold presets
THRESHOLDS = {
    "table1_m_star": 18.50,
    "table1_cusum_-0.5": 2.92,
    "table1_cusum_-1.0": 9.88,
    "table2_t_hat_star_glr": 22.50,
    "table2_tau_glr": 5.02,
}


@dataclass(frozen=True)
class Cell:
    column: str
    kind: str  # "long_arl" or "delay"
    param: float
    value: float
    stderr: float


TABLE1_COLUMNS = ("best_possible", "m_star", "cusum_-0.5", "cusum_-1.0")
TABLE1_THETAS = (-0.5, -0.6, -0.7, -0.8, -0.9, -1.0)
_TABLE1_ROWS = {
    -0.5: ((233, 7), (206, 6), (233, 7), (125, 3)),
    -0.6: ((523, 15), (501, 15), (518, 15), (297, 8)),
    -0.7: ((1384, 43), (1324, 43), (1227, 37), (938, 29)),
    -0.8: ((5157, 165), (4688, 148), (3580, 113), (4148, 129)),
    -0.9: ((22942, 699), (19217, 606), (10613, 343), (21617, 658)),
    -1.0: ((118223, 3711), (83619, 2566), (31641, 1036), (118223, 3711)),
}
TABLE1 = tuple(
    Cell(col, "long_arl", theta, float(v), float(se))
    for theta in TABLE1_THETAS
    for col, (v, se) in zip(TABLE1_COLUMNS, _TABLE1_ROWS[theta])
)
TABLE1_DELAY_TARGET = 20.0

TABLE2_COLUMNS = ("t_hat_star_glr", "tau_glr")
_TABLE2_ROWS = (
    ("long_arl", 1.0, (601, 18), (606, 19)),
    ("long_arl", 0.9, (1448, 43), (1207, 36)),
    ("long_arl", 0.8, (3772, 116), (2749, 90)),
    ("delay", 2.0, (21.41, 0.10), (21.92, 0.11)),
    ("delay", 2.2, (18.09, 0.07), (18.18, 0.09)),
    ("delay", 2.5, (15.08, 0.05), (14.76, 0.06)),
    ("delay", 2.7, (13.75, 0.04), (13.22, 0.05)),
    ("delay", 3.0, (12.29, 0.04), (11.62, 0.04)),
)
TABLE2 = tuple(
    Cell(col, kind, param, float(v), float(se))
    for kind, param, *vals in _TABLE2_ROWS
    for col, (v, se) in zip(TABLE2_COLUMNS, vals)
)
TABLE2_LONG_ARL_TARGET = 600.0

NORMAL_THETA = ParamSet.interval(-1.0, -0.5)
NORMAL_LAMBDA = ParamSet.point(0.0)
EXP_THETA = ParamSet.interval(0.8, 1.0)
EXP_LAMBDA = ParamSet.interval(2.0, 3.0)


def table1_configs(thresholds=None):
    """Detector configs for the three calibrated columns of study 1."""
    t = dict(THRESHOLDS if thresholds is None else thresholds)
    return {
        "m_star": DetectorConfig("m_star", NORMAL, NORMAL_THETA, NORMAL_LAMBDA, t["table1_m_star"], label="m_star"),
        "cusum_-0.5": DetectorConfig(
            "cusum", NORMAL, ParamSet.point(-0.5), NORMAL_LAMBDA, t["table1_cusum_-0.5"], label="cusum_-0.5"
        ),
        "cusum_-1.0": DetectorConfig(
            "cusum", NORMAL, ParamSet.point(-1.0), NORMAL_LAMBDA, t["table1_cusum_-1.0"], label="cusum_-1.0"
        ),
    }


def table1_best_possible_config(theta, a):
    return DetectorConfig("cusum", NORMAL, ParamSet.point(theta), NORMAL_LAMBDA, a, label=f"cusum_{theta:g}")


def exponential_pair():
    """The study 2 pair obtained from q0 = 1: p(theta) = I(2, theta)."""
    p = optimizer_from(constant(1.0), EXPONENTIAL, EXP_THETA, EXP_LAMBDA)
    return pair_close(p, EXPONENTIAL, EXP_THETA, EXP_LAMBDA)


def table2_configs(thresholds=None, pair=None):
    t = dict(THRESHOLDS if thresholds is None else thresholds)
    pair = pair or exponential_pair()
    return {
        "t_hat_star_glr": DetectorConfig(
            "t_hat_star_glr", EXPONENTIAL, EXP_THETA, EXP_LAMBDA, t["table2_t_hat_star_glr"], pair=pair,
            label="t_hat_star_glr",
        ),
        "tau_glr": DetectorConfig(
            "tau_glr", EXPONENTIAL, ParamSet.point(1.0), EXP_LAMBDA, t["table2_tau_glr"], label="tau_glr"
        ),
    }
