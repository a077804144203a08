"""Independent reference solutions used only by the tests."""

import numpy as np
from scipy.sparse import lil_matrix
from scipy.sparse.linalg import spsolve


def fd_linear(T, r, B, phi, a, b, g, tau, N=4000):
    """Finite differences for -u'' + a(t) u(t) + b(t) u(tau(t)) = g(t).

    u = phi on [-r, 0], u(T) = B. u(tau(t)) is read by linear interpolation
    on the same grid when tau(t) >= 0 and from phi otherwise. Returns the
    grid t on [0, T] and the nodal values.
    """
    t = np.linspace(0.0, T, N + 1)
    h = T / N
    A = lil_matrix((N + 1, N + 1))
    rhs = np.zeros(N + 1)
    A[0, 0] = 1.0
    rhs[0] = phi(0.0)
    A[N, N] = 1.0
    rhs[N] = B
    for i in range(1, N):
        ti = t[i]
        A[i, i - 1] -= 1.0 / h**2
        A[i, i] += 2.0 / h**2 + a(ti)
        A[i, i + 1] -= 1.0 / h**2
        rhs[i] += g(ti)
        s = tau(ti)
        if s < 0:
            rhs[i] -= b(ti) * phi(s)
        else:
            j = min(int(s / h), N - 1)
            w = (s - t[j]) / h
            A[i, j] += b(ti) * (1 - w)
            A[i, j + 1] += b(ti) * w
    return t, spsolve(A.tocsr(), rhs)
