"""Regenerates metrics_20.json with mir_eval.

    python3 make_metric_fixture.py > metrics_20.json
"""
import json
import random

import mir_eval
import numpy as np

ROOTS = ["C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B"]
# quality -> bass degrees that are chord tones
QUALITIES = {
    "maj": ["3", "5"],
    "min": ["b3", "5"],
    "dim": ["b3", "b5"],
    "aug": ["3", "#5"],
    "7": ["3", "5", "b7"],
    "maj7": ["3", "5", "7"],
    "min7": ["b3", "5", "b7"],
    "5": ["5"],
    "1": [],
    "sus4": ["4", "5"],
}


def random_label(rng):
    if rng.random() < 0.1:
        return "N"
    quality = rng.choice(sorted(QUALITIES))
    label = f"{rng.choice(ROOTS)}:{quality}"
    if QUALITIES[quality] and rng.random() < 0.25:
        label += "/" + rng.choice(QUALITIES[quality])
    return label


def perturb(label, rng):
    r = rng.random()
    if r < 0.4:
        return label
    if r < 0.6 and label != "N":
        root = label.split(":")[0]
        return f"{root}:{rng.choice(sorted(QUALITIES))}"
    return random_label(rng)


def score(fn, ref, est):
    comparisons = fn(ref, est)
    durations = np.ones(len(ref))
    return float(mir_eval.chord.weighted_accuracy(comparisons, durations))


def case(seed, frames=20):
    rng = random.Random(seed)
    ref = [random_label(rng) for _ in range(frames)]
    est = [perturb(label, rng) for label in ref]
    return {
        "seed": seed,
        "reference": ref,
        "estimate": est,
        "root": score(mir_eval.chord.root, ref, est),
        "majmin": score(mir_eval.chord.majmin, ref, est),
        "sevenths": score(mir_eval.chord.sevenths, ref, est),
    }


if __name__ == "__main__":
    print(json.dumps({"mir_eval": mir_eval.__version__, "cases": [case(s) for s in range(8)]}, indent=1))
