from __future__ import annotations

import functools

import numpy as np
import pytest

from slcv.simkit import SceneSpec, make_scene


def rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def square_pixel_camera(rng, focal=None, pp=None):
    """Random square-pixel camera looking roughly at the origin from ~6 units away."""
    f = rng.uniform(600, 1500) if focal is None else focal
    u0, v0 = (rng.uniform(500, 800), rng.uniform(350, 600)) if pp is None else pp
    k = np.array([[f, 0, u0], [0, f, v0], [0, 0, 1.0]])
    c = rng.standard_normal(3)
    c = 6 * c / np.linalg.norm(c)
    z = -c / np.linalg.norm(c)
    x = np.cross(rng.standard_normal(3), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r = np.vstack([x, y, z])
    return k, r, c, k @ r @ np.hstack([np.eye(3), -c[:, None]])


@functools.lru_cache(maxsize=256)
def cached_scene(seed: int = 0, **kw):
    return make_scene(SceneSpec(seed=seed, **kw))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240601))


@pytest.fixture
def scene():
    return cached_scene


# ---------------------------------------------------------------- acceptance summary
def pytest_configure(config):
    config._criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        cfg = _config()
        if cfg is not None:
            cfg._criteria[props["criterion"]] = (report.passed, props.get("detail", ""))


_CONFIG = []


def pytest_sessionstart(session):
    _CONFIG.append(session.config)


def _config():
    return _CONFIG[-1] if _CONFIG else None


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        ok, detail = crit[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
