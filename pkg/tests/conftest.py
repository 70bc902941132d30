import numpy as np
import pytest

from branchlab.fields import CylindricalModeField
from branchlab.quadrature import QuadratureSpec

# c with c . c = 0: the admissible coefficient for odd-k minimizing profiles
C_NULL = np.array([1.0, 1.0j]) / np.sqrt(2.0)


@pytest.fixture(scope="session")
def spec_fast():
    return QuadratureSpec(nr=32, ntheta=64, naxis=16, nsphere=128, npolar=64)


@pytest.fixture(scope="session")
def spec_fine():
    return QuadratureSpec(nr=64, ntheta=128, naxis=24, nsphere=384, npolar=128)


@pytest.fixture(scope="session")
def phi_half():
    """Model profile {+-Re(c z^(1/2))} with c . c = 0, n = 2."""
    return CylindricalModeField.power_sum([(C_NULL, 1)], n=2)


def power_sum_norm_sq(terms, rho=1.0):
    """Closed form of int_{B_rho} |u|^2 for {+-Re(sum c_j z^(k_j/2))} in n = 2.

    Distinct half-integer angular modes are L2-orthogonal on circles, so
    int_{B_rho} |u|^2 = 2 int |s|^2 = 2 pi sum_j |c_j|^2 rho^(k_j+2)/(k_j/2+1).
    """
    total = 0.0
    for c, k in terms:
        c = np.atleast_1d(np.asarray(c, dtype=complex))
        a = k / 2.0
        total += 2.0 * np.pi * float(np.sum(np.abs(c) ** 2)) * rho ** (2 * a + 2) / (2 * a + 2)
    return total


def power_sum_DH(terms, rho=1.0):
    """Closed forms D(rho), H(rho) for power sums in n = 2 (same orthogonality)."""
    D = 0.0
    H = 0.0
    for c, k in terms:
        c = np.atleast_1d(np.asarray(c, dtype=complex))
        a = k / 2.0
        csq = float(np.sum(np.abs(c) ** 2))
        D += 2.0 * np.pi * a * csq * rho ** (2 * a)
        H += 2.0 * np.pi * csq * rho ** (2 * a)
    return D, H
