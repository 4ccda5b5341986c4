import numpy as np
import pytest

from nslab.spectral import VectorField, leray_project, make_grid


def smooth_field(grid, seed=0, kmax=2, amplitude=1.0):
    """Solenoidal, mean-free field on the modes with max |m_i| <= kmax, scaled to max |u| = amplitude."""
    rng = np.random.default_rng(seed)
    m = grid.modes
    keep = (np.abs(m)[:, None, None] <= kmax) & (np.abs(m)[None, :, None] <= kmax) & (np.abs(m)[None, None, :] <= kmax)
    c = np.fft.fftn(rng.standard_normal((3,) + (grid.n,) * 3), axes=(1, 2, 3)) * keep
    c[:, 0, 0, 0] = 0
    u = leray_project(VectorField(grid, c, "spectral"))
    top = float(np.max(u.magnitude()))
    return VectorField(grid, u.spectral * (amplitude / top), "spectral", solenoidal=True)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs a scenario end to end")


@pytest.fixture
def grid16():
    return make_grid(16, 2 * np.pi)


ACCEPTANCE: list[str] = []


def record(number, name: str, passed: bool, measured, bound) -> bool:
    line = f"criterion {number:>2} {name}: {'PASS' if passed else 'FAIL'} measured={measured} bound={bound}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
