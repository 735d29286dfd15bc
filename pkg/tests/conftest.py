import numpy as np
import pytest

from ensemble_ctl.bloch import OMEGA_X, OMEGA_Y, OMEGA_Z


def rk4_bloch(m0, omega, u, v, T, steps=4000):
    """Integrate dM/dt = (w OZ + u OX + v OY) M with classical RK4.

    ``omega`` may be an array of nodes; ``u`` and ``v`` are constants.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    gen = (omega[:, None, None] * OMEGA_Z + u * OMEGA_X + v * OMEGA_Y)
    M = np.tile(np.asarray(m0, dtype=float), (omega.size, 1))
    h = T / steps

    def f(M):
        return np.einsum("nij,nj->ni", gen, M)

    for _ in range(steps):
        k1 = f(M)
        k2 = f(M + 0.5 * h * k1)
        k3 = f(M + 0.5 * h * k2)
        k4 = f(M + h * k3)
        M = M + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return M


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
