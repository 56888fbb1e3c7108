import json
import math
import sys

import numpy as np

_REAL_STDOUT = sys.stdout


def _fail(message):
    sys.stderr.write("scaffold: " + message + "\n")
    sys.exit(3)


def _load_instances(path):
    instances = []
    with open(path) as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("kind") != "header":
                instances.append(obj)
    return instances


def _distance_matrix(coords):
    c = np.asarray(coords, dtype=np.float64)
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1])


def _emit(objectives, solutions):
    with open("solutions.json", "w") as handle:
        json.dump(solutions, handle)
    for value in objectives:
        _REAL_STDOUT.write(repr(float(value)) + "\n")
    _REAL_STDOUT.flush()
