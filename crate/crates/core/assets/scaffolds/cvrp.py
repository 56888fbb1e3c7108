# ---- candidate heuristic ----
{{HEURISTIC}}
# ---- end candidate heuristic ----


def _solve_cvrp(coords, demands, capacity):
    dist = _distance_matrix(coords)
    demand_arr = np.asarray(demands, dtype=np.int64)
    depot = 0
    current = depot
    rest = capacity
    unvisited = list(range(1, len(demands)))
    routes = [[]]
    while unvisited:
        chosen = select_next_node(
            current,
            depot,
            np.array(unvisited, dtype=np.int64),
            np.asarray(rest),
            demand_arr,
            dist,
        )
        try:
            chosen = int(chosen)
        except (TypeError, ValueError):
            _fail("select_next_node returned %r" % (chosen,))
        if chosen == depot or chosen == -1:
            if current == depot:
                _fail("heuristic returned to the depot without serving a customer")
            current = depot
            rest = capacity
            routes.append([])
            continue
        if chosen not in unvisited:
            _fail("node %d is not an unvisited customer" % chosen)
        if demands[chosen] > rest:
            _fail("node %d exceeds the remaining capacity" % chosen)
        unvisited.remove(chosen)
        routes[-1].append(chosen)
        rest -= demands[chosen]
        current = chosen
    routes = [r for r in routes if r]
    cost = 0.0
    for route in routes:
        prev = depot
        for c in route:
            cost += float(dist[prev, c])
            prev = c
        cost += float(dist[prev, depot])
    return cost, routes


def _main():
    instances = _load_instances(sys.argv[1])
    sys.stdout = sys.stderr
    objectives, solutions = [], []
    for inst in instances:
        cost, routes = _solve_cvrp(inst["coords"], [int(d) for d in inst["demands"]], int(inst["capacity"]))
        objectives.append(cost)
        solutions.append(routes)
    _emit(objectives, solutions)


if __name__ == "__main__":
    _main()
