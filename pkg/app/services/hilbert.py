"""
Inner-product arithmetic on the discrete control space

The control space carries the mass-weighted L2 geometry, so every norm here
is a discretization of the corresponding L2(D) or L1(D) norm.
"""

import numpy as np

from app.schemas.fields import ControlField


def inner_l2_p0(u: ControlField, v: ControlField) -> float:
    """Sum over cells of |T| u_T v_T"""
    u._check(v)
    return float(np.dot(u.space.weights, u.values * v.values))


def norm_l2_p0(u: ControlField) -> float:
    return float(np.sqrt(inner_l2_p0(u, u)))


def norm_l1_p0(u: ControlField) -> float:
    """Sum over cells of |T| |u_T|"""
    return float(np.dot(u.space.weights, np.abs(u.values)))


def max_abs(u: ControlField) -> float:
    return float(np.max(np.abs(u.values))) if u.values.size else 0.0
