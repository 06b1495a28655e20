"""Brute-force facility-location reference, written with plain Python loops."""
import itertools


def F(D, S):
    """sum_i (M - min(M, min_{j in S} d_ij)) with M the largest entry."""
    m = len(D)
    M = max(max(r) for r in D)
    return sum(M - min([M] + [D[i][j] for j in S]) for i in range(m))


def L(D, S):
    return sum(min(D[i][j] for j in S) for i in range(len(D)))


def gain(D, S, e):
    """sum_i max(0, mindist_i - d_ie); equals F(S + e) - F(S) in exact arithmetic."""
    M = max(max(r) for r in D)
    total = 0.0
    for i in range(len(D)):
        mind = min([M] + [D[i][j] for j in S])
        total += max(0.0, mind - D[i][e])
    return total


def greedy(D, r):
    """Greedy by maximum gain, ties to the lowest index."""
    S = []
    for _ in range(r):
        best, best_g = None, None
        for e in range(len(D)):
            if e in S:
                continue
            g = gain(D, S, e)
            if best_g is None or g > best_g:
                best, best_g = e, g
        S.append(best)
    return S


def best_value(D, r):
    return max(F(D, S) for S in itertools.combinations(range(len(D)), r))


def weights(D, S):
    """Cluster sizes with selected points owning themselves and ties to the lowest index."""
    owner = []
    for i in range(len(D)):
        if i in S:
            owner.append(i)
        else:
            owner.append(min(sorted(S), key=lambda j: D[i][j]))
    return [owner.count(j) for j in S], owner


def random_instance(rng, m, d=2, integer=False):
    import numpy as np

    P = rng.random((m, d))
    D = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    if integer:
        D = np.round(D * 10)
    return D
