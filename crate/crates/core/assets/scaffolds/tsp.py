# ---- candidate heuristic ----
{{HEURISTIC}}
# ---- end candidate heuristic ----


def _solve_tsp(coords):
    dist = _distance_matrix(coords)
    n = len(dist)
    start = 0
    current = start
    route = [start]
    unvisited = list(range(1, n))
    while unvisited:
        chosen = select_next_node(current, start, np.array(unvisited, dtype=np.int64), dist)
        try:
            chosen = int(chosen)
        except (TypeError, ValueError):
            _fail("select_next_node returned %r" % (chosen,))
        if chosen not in unvisited:
            _fail("node %d is not unvisited" % chosen)
        unvisited.remove(chosen)
        route.append(chosen)
        current = chosen
    length = 0.0
    for k in range(n):
        length += float(dist[route[k], route[(k + 1) % n]])
    return length, route


def _main():
    instances = _load_instances(sys.argv[1])
    sys.stdout = sys.stderr
    objectives, solutions = [], []
    for inst in instances:
        length, route = _solve_tsp(inst["coords"])
        objectives.append(length)
        solutions.append(route)
    _emit(objectives, solutions)


if __name__ == "__main__":
    _main()
