"""Compilation settings shared by the hot path.

Hot functions take named tuples of arrays; with reference counting on, every
call pays an incref/decref per array, which dominated the slot loop.  They
never allocate, so the runtime is switched off for them.
"""
from numba import njit

hot = njit(cache=True, _nrt=False)
