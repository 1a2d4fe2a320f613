"""Reference values for the three-dimensional worked example.

The reference tables list the first 30 staircase points of each extreme
measure, rounded to 4 decimals. The tabulated values were generated with
tail tolerance 1e-5: structure (0,0,0) with intensities (3, 5, 7), the other
three structures with intensities (1, 2, 3). The reference correlation matrices
also correspond to intensities (1, 2, 3), while the reference calibration
weights correspond to the (3, 5, 7) extreme matrices.
"""

from __future__ import annotations

import numpy as np

TABLE_EPSILON = 1e-5
TABLE_ROUNDING = 5e-5
NOMINAL_INTENSITIES = (3.0, 5.0, 7.0)
NOMINAL_EPSILON = 0.01
TABLE_INTENSITIES = {
    (0, 0, 0): (3.0, 5.0, 7.0),
    (0, 1, 0): (1.0, 2.0, 3.0),
    (0, 0, 1): (1.0, 2.0, 3.0),
    (0, 1, 1): (1.0, 2.0, 3.0),
}
MATRIX_INTENSITIES = (1.0, 2.0, 3.0)
CALIBRATION_INTENSITIES = (3.0, 5.0, 7.0)

TABLE_E1 = (
    ((0, 0, 0), 0.0009),
    ((0, 0, 1), 0.0058),
    ((0, 1, 1), 0.0006),
    ((0, 1, 2), 0.0223),
    ((0, 1, 3), 0.0108),
    ((0, 2, 3), 0.0094),
    ((1, 2, 3), 0.0320),
    ((1, 2, 4), 0.0429),
    ((1, 3, 4), 0.0483),
    ((1, 3, 5), 0.0262),
    ((2, 3, 5), 0.0659),
    ((2, 4, 5), 0.0357),
    ((2, 4, 6), 0.1225),
    ((3, 4, 6), 0.0173),
    ((3, 5, 6), 0.0092),
    ((3, 5, 7), 0.1490),
    ((3, 5, 8), 0.0172),
    ((3, 6, 8), 0.0313),
    ((4, 6, 8), 0.0819),
    ((4, 6, 9), 0.0331),
    ((4, 7, 9), 0.0531),
    ((5, 7, 9), 0.0152),
    ((5, 7, 10), 0.0361),
    ((5, 8, 10), 0.0349),
    ((5, 8, 11), 0.0146),
    ((6, 8, 11), 0.0158),
    ((6, 9, 11), 0.0147),
    ((6, 9, 12), 0.0198),
    ((7, 9, 12), 0.0017),
    ((7, 10, 12), 0.0048),
)

TABLE_E2 = (
    ((0, 10, 0), 0.0000),
    ((0, 9, 0), 0.0002),
    ((0, 8, 0), 0.0009),
    ((0, 7, 0), 0.0034),
    ((0, 6, 0), 0.0120),
    ((0, 5, 0), 0.0332),
    ((0, 5, 1), 0.0029),
    ((0, 4, 1), 0.0902),
    ((0, 3, 1), 0.0563),
    ((0, 3, 2), 0.1242),
    ((0, 2, 2), 0.0446),
    ((1, 2, 2), 0.0553),
    ((1, 2, 3), 0.1708),
    ((1, 1, 3), 0.0532),
    ((1, 1, 4), 0.0885),
    ((2, 1, 4), 0.0795),
    ((2, 1, 5), 0.0494),
    ((2, 0, 5), 0.0514),
    ((2, 0, 6), 0.0036),
    ((3, 0, 6), 0.0468),
    ((3, 0, 7), 0.0145),
    ((4, 0, 7), 0.0071),
    ((4, 0, 8), 0.0081),
    ((4, 0, 9), 0.0001),
    ((5, 0, 9), 0.0026),
    ((5, 0, 10), 0.0005),
    ((6, 0, 10), 0.0003),
    ((6, 0, 11), 0.0002),
    ((7, 0, 11), 0.0000),
    ((7, 0, 12), 0.0001),
)

TABLE_E3 = (
    ((0, 0, 13), 0.0000),
    ((0, 0, 12), 0.0001),
    ((0, 0, 11), 0.0002),
    ((0, 0, 10), 0.0008),
    ((0, 0, 9), 0.0027),
    ((0, 0, 8), 0.0081),
    ((0, 0, 7), 0.0216),
    ((0, 0, 6), 0.0504),
    ((0, 0, 5), 0.0514),
    ((0, 1, 5), 0.0494),
    ((0, 1, 4), 0.1680),
    ((0, 1, 3), 0.0151),
    ((1, 1, 3), 0.0381),
    ((1, 2, 3), 0.1708),
    ((1, 2, 2), 0.0999),
    ((1, 3, 2), 0.0591),
    ((2, 3, 2), 0.0651),
    ((2, 3, 1), 0.0563),
    ((2, 4, 1), 0.0626),
    ((3, 4, 1), 0.0276),
    ((3, 5, 1), 0.0029),
    ((3, 5, 0), 0.0308),
    ((4, 5, 0), 0.0024),
    ((4, 6, 0), 0.0120),
    ((4, 7, 0), 0.0009),
    ((5, 7, 0), 0.0026),
    ((5, 8, 0), 0.0005),
    ((6, 8, 0), 0.0004),
    ((6, 9, 0), 0.0002),
    ((7, 9, 0), 0.0000),
)

TABLE_E4 = (
    ((0, 10, 13), 0.0000),
    ((0, 10, 12), 0.0000),
    ((0, 9, 12), 0.0000),
    ((0, 9, 11), 0.0002),
    ((0, 8, 11), 0.0001),
    ((0, 8, 10), 0.0008),
    ((0, 7, 10), 0.0000),
    ((0, 7, 9), 0.0027),
    ((0, 7, 8), 0.0007),
    ((0, 6, 8), 0.0074),
    ((0, 6, 7), 0.0047),
    ((0, 5, 7), 0.0169),
    ((0, 5, 6), 0.0191),
    ((0, 4, 6), 0.0313),
    ((0, 4, 5), 0.0590),
    ((0, 3, 5), 0.0419),
    ((0, 3, 4), 0.1386),
    ((0, 2, 4), 0.0294),
    ((0, 2, 3), 0.0151),
    ((1, 2, 3), 0.2089),
    ((1, 2, 2), 0.0172),
    ((1, 1, 2), 0.1418),
    ((2, 1, 2), 0.0651),
    ((2, 1, 1), 0.0638),
    ((2, 0, 1), 0.0550),
    ((3, 0, 1), 0.0305),
    ((3, 0, 0), 0.0308),
    ((4, 0, 0), 0.0153),
    ((5, 0, 0), 0.0031),
    ((6, 0, 0), 0.0005),
)
TABLES = {
    (0, 0, 0): TABLE_E1,
    (0, 1, 0): TABLE_E2,
    (0, 0, 1): TABLE_E3,
    (0, 1, 1): TABLE_E4,
}

# Reference order of the structures: (0,0,0), (0,1,0), (0,0,1), (0,1,1).
REFERENCE_ORDER = ((0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 1, 1))

CORRELATION_MATRICES = {
    (0, 0, 0): np.array([[1.0, 0.93688, 0.931861], [0.93688, 1.0, 0.967188], [0.931861, 0.967188, 1.0]]),
    (0, 1, 0): np.array([[1.0, -0.81193, 0.931861], [-0.81193, 1.0, -0.90135], [0.931861, -0.90135, 1.0]]),
    (0, 0, 1): np.array([[1.0, 0.93688, -0.84624], [0.93688, 1.0, -0.90135], [-0.84624, -0.90135, 1.0]]),
    (0, 1, 1): np.array([[1.0, -0.81193, -0.84624], [-0.81193, 1.0, 0.967188], [-0.84624, 0.967188, 1.0]]),
}
MATRIX_TOL = 1e-4

TARGET = np.array([[1.0, -0.8, -0.5], [-0.8, 1.0, 0.5], [-0.5, 0.5, 1.0]])
# Weights keyed by structure.
WEIGHTS = {
    (0, 0, 0): 0.0287993,
    (0, 1, 0): 0.205588,
    (0, 0, 1): 0.0436342,
    (0, 1, 1): 0.721979,
}
WEIGHT_TOL = 1e-5
