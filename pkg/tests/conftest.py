import numpy as np
import pytest

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def cd_lasso(S, D, lam, tol=1e-10, max_sweeps=100000):
    """Cyclic coordinate descent on ||S - DC||^2 + lam * sum|C|, frame by frame.

    Works on the Gram matrix D^H D and runs until the subgradient
    stationarity violation falls below `tol`.
    """
    C = np.zeros((D.shape[1], S.shape[1]), complex)
    G = D.conj().T @ D
    norms = np.real(np.diag(G))
    for t in range(S.shape[1]):
        s, c = S[:, t], C[:, t]
        b = D.conj().T @ s
        g = b.copy()  # b - G c
        for sweep in range(max_sweeps):
            for j in range(D.shape[1]):
                z = g[j] + norms[j] * c[j]
                mag = abs(z)
                new = 0.0 if mag <= lam / 2 else (1 - lam / (2 * mag)) * z / norms[j]
                if new != c[j]:
                    g -= G[:, j] * (new - c[j])
                    c[j] = new
            if sweep % 10 == 9 and stationarity(s, D, c, lam) < tol:
                break
    return C


def stationarity(s, D, c, lam):
    g = 2 * D.conj().T @ (D @ c - s)
    nz = c != 0
    viol = np.zeros(c.shape[0])
    viol[nz] = np.abs(g[nz] + lam * c[nz] / np.abs(c[nz]))
    viol[~nz] = np.maximum(np.abs(g[~nz]) - lam, 0.0)
    return viol.max()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        )
