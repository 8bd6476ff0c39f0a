import numpy as np


def random_symmetric(rng, n, density=0.6, scale=1.0):
    """Random symmetric nonnegative weights with zero diagonal."""
    A = rng.random((n, n)) * scale
    A *= rng.random((n, n)) < density
    A = np.triu(A, 1)
    return A + A.T


def random_system(rng, n, max_order=2, n_states=2, n_rules=12, recovery=True):
    """Random valid rule set on ``n`` vertices with orders in ``[0, max_order]``."""
    from hyperips.rates import InteractionRule, StateSpace, build_rate_system

    names = tuple(str(s) for s in range(n_states))
    rules, seen = [], set()
    for _ in range(n_rules):
        m = int(rng.integers(1, max_order + 1))
        target = int(rng.integers(n))
        others = [v for v in range(n) if v != target]
        base = tuple(sorted(int(b) for b in rng.choice(others, size=m, replace=False)))
        bst = tuple(names[int(s)] for s in rng.integers(n_states, size=m))
        src = int(rng.integers(n_states))
        dst = (src + 1 + int(rng.integers(n_states - 1))) % n_states
        key = (m, base, target, bst, src, dst)
        if key in seen:
            continue
        seen.add(key)
        rules.append(InteractionRule(m, base, target, bst, names[src], names[dst], float(rng.uniform(0.1, 1.0))))
    if recovery:
        for v in range(n):
            rules.append(InteractionRule(0, (), v, (), names[-1], names[0], float(rng.uniform(0.0, 0.5))))
    return build_rate_system(StateSpace(names), n, rules)
