import matplotlib
import numpy as np
import pytest

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


@pytest.fixture(autouse=True)
def _close_figures():
    yield
    plt.close("all")


REGION_HEADER = (
    "# bcecap 0.1.0\n"
    "# config_sha256: {sha}\n"
    "# rule: strongest_last\n"
    "# points: {points}\n"
    "# failed_fraction: 0.0\n"
)

REGION_COLUMNS = "lambda1,a1_bits_s_hz,a2_bits_s_hz,epsilon,iters,status\n"


def write_region_csv(path, rows, sha="f00d", cfg=()):
    """rows: iterable of (lambda1, a1, a2, status)."""
    text = REGION_HEADER.format(sha=sha, points=len(rows))
    for key, value in cfg:
        text += f"# cfg: {key} = {value}\n"
    text += REGION_COLUMNS
    for lam, a1, a2, status in rows:
        text += f"{lam},{a1},{a2},0.2,5,{status}\n"
    path.write_text(text)
    return path


def write_tail_csv(path, theta_by_user, q=None, n_frames=1_000_000):
    """Exact geometric tails ccdf = exp(-theta*q), one block per user."""
    if q is None:
        q = np.linspace(100.0, 400.0, 8)
    text = (
        "# bcecap 0.1.0\n"
        "# config_sha256: beef\n"
        f"# n_frames: {n_frames}\n"
    )
    for user, theta in theta_by_user.items():
        text += f"# theta_hat_{user}: {theta!r}\n"
    text += "user,q_bits,ccdf\n"
    for user, theta in theta_by_user.items():
        for qi in q:
            text += f"{user},{float(qi)!r},{float(np.exp(-theta * qi))!r}\n"
    path.write_text(text)
    return path


def write_curve_csv(path, snr, mi_bits, name="bpsk"):
    text = (
        "# bcecap 0.1.0\n"
        f"# input: {name}\n"
        f"# interferer: {name}\n"
        "# int_ratio: 1.0\n"
        "snr,mi_bits,mmse,mi_interf_bits,mmse_interf\n"
    )
    for s, mi in zip(snr, mi_bits):
        cells = (s, mi, 1 / (1 + s), mi / 2, 0.5 / (1 + s))
        text += ",".join(repr(float(c)) for c in cells) + "\n"
    path.write_text(text)
    return path


def write_boundary_csv(path, z2, z1_star):
    text = (
        "# bcecap 0.1.0\n"
        "# config_sha256: cafe\n"
        "# lambda1: 0.5\n"
        "# rule: theorem2\n"
        "z2,z1_star,residual_nats,rule\n"
    )
    for a, b in zip(z2, z1_star):
        resid = "nan" if not np.isfinite(b) or b == 0.0 else "1e-9"
        text += f"{float(a)!r},{float(b)!r},{resid},theorem2\n"
    path.write_text(text)
    return path
