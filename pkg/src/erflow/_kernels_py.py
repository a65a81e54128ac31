"""Element-batch quadrature contractions (numpy backend)."""

import numpy as np


def weighted_gram(B, D, w):
    DB = np.einsum("tqab,tqbj->tqaj", D, B)
    return np.einsum("tq,tqai,tqaj->tij", w, B, DB, optimize=True)


def weighted_outer(L, R, w):
    return np.einsum("tq,tqi,tqj->tij", w, L, R, optimize=True)


def weighted_apply(B, s, w):
    return np.einsum("tq,tqaj,tqa->tj", w, B, s, optimize=True)
