# ---- candidate heuristic ----
{{HEURISTIC}}
# ---- end candidate heuristic ----


def _candidates(n, w):
    from itertools import combinations, product

    values = np.asarray(list(product((1, 2), repeat=w)), dtype=np.int8).reshape(-1, w)
    blocks = []
    for support in combinations(range(n), w):
        block = np.zeros((len(values), n), dtype=np.int8)
        block[:, list(support)] = values
        blocks.append(block)
    arr = np.concatenate(blocks)
    order = np.lexsort(arr.T[::-1])
    return arr[order]


# _GOOD[3 * a + b, c] is true when {a, b, c} is {0,1,2}, {0,0,1} or {0,0,2}
_GOOD = np.zeros((9, 3), dtype=bool)
for _a in range(3):
    for _b in range(3):
        for _c in range(3):
            _GOOD[3 * _a + _b, _c] = sorted((_a, _b, _c)) in ([0, 1, 2], [0, 0, 1], [0, 0, 2])


def _solve_asp(n, w):
    cands = _candidates(n, w)
    scores = np.empty(len(cands), dtype=np.float64)
    chunk = 1 << 16
    for start in range(0, len(cands), chunk):
        for offset, row in enumerate(cands[start:start + chunk].tolist()):
            s = float(priority(tuple(row), n, w))
            if not math.isfinite(s):
                _fail("non-finite priority for candidate %d" % (start + offset))
            scores[start + offset] = s
    order = np.argsort(-scores, kind="stable")
    masks = (cands != 0).astype(np.int64) @ (1 << np.arange(n, dtype=np.int64))
    used = set()
    chosen = []
    pair_codes = np.zeros((0, n), dtype=np.int8)
    for idx in order:
        mask = int(masks[idx])
        if mask in used:
            continue
        v = cands[idx]
        if len(pair_codes) and not _GOOD[pair_codes, v[None, :]].any(axis=1).all():
            continue
        if chosen:
            new = 3 * np.asarray(chosen, dtype=np.int8) + v[None, :]
            pair_codes = np.concatenate([pair_codes, new.astype(np.int8)])
        used.add(mask)
        chosen.append(v)
    return [[int(x) for x in v] for v in chosen]


def _main():
    instances = _load_instances(sys.argv[1])
    sys.stdout = sys.stderr
    objectives, solutions = [], []
    for inst in instances:
        chosen = _solve_asp(int(inst["n"]), int(inst["w"]))
        objectives.append(len(chosen))
        solutions.append(chosen)
    _emit(objectives, solutions)


if __name__ == "__main__":
    _main()
