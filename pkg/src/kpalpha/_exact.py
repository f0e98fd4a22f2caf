"""Bookkeeping for exactness floors, kept separately for every time degree.

A floor tuple has one entry per time degree d.  ``None`` means the degree-d
component is known completely.  An integer f means the degree-d component is
correct at orders >= f and unknown below.  ``UNKNOWN`` marks a component of
which nothing is known.
"""

from __future__ import annotations

UNKNOWN = 1 << 40


def exact(T: int) -> tuple:
    return (None,) * (T + 1)


def uniform(T: int, f) -> tuple:
    return (f,) * (T + 1)


def fmax(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a if a > b else b


def merge(fa: tuple, fb: tuple) -> tuple:
    """Floors of a sum."""
    return tuple(fmax(a, b) for a, b in zip(fa, fb))


def clamp(f: tuple, lo: int) -> tuple:
    return tuple(None if x is None else min(max(x, lo), UNKNOWN) for x in f)


def raise_on(f: tuple, lo: int, mask: int) -> tuple:
    """Raise the floors of the degrees set in ``mask`` to at least ``lo``."""
    if not mask:
        return f
    return tuple(fmax(x, lo) if mask >> d & 1 else x for d, x in enumerate(f))


def effective_orders(ords: tuple, floors: tuple) -> tuple:
    """Largest order at which each degree may carry a nonzero (known or not) term."""
    out = []
    for o, f in zip(ords, floors):
        if f is not None:
            o = f - 1 if o is None else max(o, f - 1)
        out.append(o)
    return tuple(out)


def product(fa: tuple, oa: tuple, fb: tuple, ob: tuple) -> tuple:
    """Floors of a product from the factors' floors and effective orders.

    Unknown terms of a below fa[da] only reach orders below fa[da] + ob[db],
    and symmetrically; the result degree is da + db.
    """
    T = len(fa) - 1
    out = [None] * (T + 1)
    for da in range(T + 1):
        for db in range(T + 1 - da):
            cand = None
            if fa[da] is not None and ob[db] is not None:
                cand = fa[da] + ob[db]
            if fb[db] is not None and oa[da] is not None:
                cand = fmax(cand, fb[db] + oa[da])
            if cand is not None:
                out[da + db] = fmax(out[da + db], cand)
    return tuple(out)


def mask_product(ma: int, mb: int, T: int) -> int:
    out = 0
    for da in range(T + 1):
        if ma >> da & 1:
            for db in range(T + 1 - da):
                if mb >> db & 1:
                    out |= 1 << (da + db)
    return out


def full_mask(T: int) -> int:
    return (1 << (T + 1)) - 1


def shift_down(f: tuple) -> tuple:
    """Floors after a time derivative: degree d comes from degree d + 1."""
    return tuple(f[1:]) + (UNKNOWN,)


def only_t0(f: tuple) -> tuple:
    return (f[0],) + (None,) * (len(f) - 1)


def upto(f: tuple, d: int) -> tuple:
    return tuple(x if n <= d else None for n, x in enumerate(f))


def worst(f: tuple):
    """Single conservative floor (None when everything is exact)."""
    out = None
    for x in f:
        out = fmax(out, x)
    return out


def to_json(f: tuple):
    return [x if x is None or x < UNKNOWN else "unknown" for x in f]


def from_json(data, T: int) -> tuple:
    if data is None:
        return exact(T)
    if isinstance(data, int):
        return uniform(T, data)
    vals = [UNKNOWN if x == "unknown" else x for x in data]
    if len(vals) != T + 1:
        raise ValueError(f"expected {T + 1} floor entries, got {len(vals)}")
    return tuple(None if x is None else int(x) for x in vals)
