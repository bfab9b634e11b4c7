#!/usr/bin/env python3
"""Regenerates the fixture mini-datasets. Output is deterministic.

    python3 fixtures/generate.py

uci_like       txt in 2 split directories, space separated, g, 100 Hz,
               gravity included, label from the file name
mobiact_like   csv in 20 activity-code directories, m/s^2, millisecond
               timestamps around 20 Hz, per-row activity codes
counts_like    ';' separated csv with comma decimals, raw counts
               (0.0039 g per count), 50 Hz, labels in sidecar files
"""

import math
import random
import shutil
from pathlib import Path

G = 9.80665
HERE = Path(__file__).resolve().parent

# (frequency Hz, amplitude m/s^2) of the dominant motion per activity
MOTION = {
    "walking": (1.8, 2.0),
    "running": (2.8, 6.0),
    "stairs_up": (1.5, 2.5),
    "stairs_down": (1.6, 3.0),
    "jumping": (1.2, 8.0),
    "cycling": (1.0, 1.2),
    "bending": (0.3, 1.5),
}
# gravity direction for static postures
POSTURE = {
    "standing": (0.0, 0.0, 1.0),
    "sitting": (0.0, 0.5, 0.866),
    "lying": (1.0, 0.0, 0.0),
}


def signal(activity, t, rng, gravity=True):
    """One (x, y, z) sample in m/s^2."""
    gx, gy, gz = POSTURE.get(activity, (0.0, 0.0, 1.0))
    base = [gx * G, gy * G, gz * G] if gravity else [0.0, 0.0, 0.0]
    if activity in MOTION:
        f, a = MOTION[activity]
        base[0] += a * math.sin(2 * math.pi * f * t)
        base[2] += 0.5 * a * math.sin(2 * math.pi * f * t + 0.7)
        noise = 0.2
    elif activity.startswith("fall"):
        # a short impact early in the trace
        base[1] += 25.0 * math.exp(-((t - 1.0) ** 2) / 0.02)
        noise = 0.3
    elif activity in POSTURE:
        noise = 0.05
    else:
        # transitions: slow tilt
        base[1] += 3.0 * math.sin(math.pi * min(t, 2.0) / 2.0)
        noise = 0.15
    return [v + rng.gauss(0.0, noise) for v in base]


def reset(path):
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)


def uci_like(rng):
    root = HERE / "datasets" / "uci_like"
    reset(root)
    files = [
        ("train", 1, "WALKING", "walking"),
        ("train", 1, "RUNNING", "running"),
        ("train", 1, "SITTING", "sitting"),
        ("train", 2, "LAYING", "lying"),
        ("test", 3, "RUNNING", "running"),
        ("test", 3, "STANDING", "standing"),
        ("test", 3, "WALKING_UPSTAIRS", "stairs_up"),
    ]
    for split, subject, raw, activity in files:
        d = root / split
        d.mkdir(exist_ok=True)
        lines = []
        for k in range(600):
            x, y, z = signal(activity, k / 100.0, rng)
            lines.append("  %.7e %.7e %.7e" % (x / G, y / G, z / G))
        (d / f"acc_{subject}_{raw}.txt").write_text("\n".join(lines) + "\n")


MOBIACT_CODES = {
    "STD": "standing", "WAL": "walking", "JOG": "running", "JUM": "jumping",
    "STU": "stairs_up", "STN": "stairs_down", "SCH": "sit_down", "SIT": "sitting",
    "CHU": "stand_up", "CSI": "transition_other", "CSO": "transition_other",
    "LYI": "lying", "FOL": "fall_forward", "FKL": "fall_forward",
    "BSC": "fall_backward", "SDL": "fall_lateral", "BND": "bending",
    "CYC": "cycling", "LDN": "lie_down", "NUL": "null",
}
FALLS = {"FOL", "FKL", "BSC", "SDL"}


def mobiact_like(rng):
    root = HERE / "datasets" / "mobiact_like"
    reset(root)
    for code, activity in MOBIACT_CODES.items():
        d = root / code
        d.mkdir()
        for subject in (1, 2):
            rows = ["timestamp,acc_x,acc_y,acc_z,label"]
            t_ms = 0
            for k in range(90):
                # after a fall the subject lies still
                lying = code in FALLS and k >= 50
                label = "LYI" if lying else code
                act = "lying" if lying else activity
                x, y, z = signal(act, t_ms / 1000.0, rng)
                rows.append("%d,%.6f,%.6f,%.6f,%s" % (t_ms, x, y, z, label))
                t_ms += 50 + rng.choice((-1, 0, 0, 1))
            (d / f"{subject}_1.csv").write_text("\n".join(rows) + "\n")


COUNTS_SESSIONS = {
    ("s01", 1): [("walk", 500), ("run", 500), ("Sit", 500)],
    ("s01", 2): [("Stand Up", 150), ("walk", 600), ("stairs-up", 500)],
    ("s02", 1): [("sit", 600), ("walk", 400), ("run", 500)],
    ("s02", 2): [("stairs-up", 500), ("walk", 500), ("Stand Up", 150)],
}
COUNTS_ACTIVITY = {
    "walk": "walking", "run": "running", "sit": "sitting",
    "stand up": "stand_up", "stairs-up": "stairs_up",
}


def counts_like(rng):
    root = HERE / "datasets" / "counts_like"
    reset(root)
    scale = 0.0039
    for (subject, trial), segments in COUNTS_SESSIONS.items():
        d = root / subject
        d.mkdir(exist_ok=True)
        rows = ["ax;ay;az"]
        spans = ["start;end;label"]
        k = 0
        for raw, n in segments:
            activity = COUNTS_ACTIVITY[raw.lower()]
            spans.append(f"{k};{k + n};{raw}")
            for _ in range(n):
                x, y, z = signal(activity, k / 50.0, rng, gravity=False)
                counts = [v / (scale * G) for v in (x, y, z)]
                rows.append(";".join(("%.2f" % c).replace(".", ",") for c in counts))
                k += 1
        (d / f"session_{trial}.csv").write_text("\n".join(rows) + "\n")
        (d / f"session_{trial}.labels").write_text("\n".join(spans) + "\n")


def main():
    rng = random.Random(20200914)
    uci_like(rng)
    mobiact_like(rng)
    counts_like(rng)


if __name__ == "__main__":
    main()
