# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled TreeSHAP path-weight kernel.

Mirrors ``_treeshap_py`` expression by expression; both backends must produce
bit-identical float64 output. Compiled without -ffast-math for that reason.
The row loop releases the GIL so callers can spread row chunks over threads.
"""

from libc.math cimport isnan
from libc.stdlib cimport free, malloc


cdef void _extend(int* fi, double* zf, double* of, double* pw,
                  int off, int unique_depth,
                  double pzf, double pof, int pfi) noexcept nogil:
    cdef int i
    fi[off + unique_depth] = pfi
    zf[off + unique_depth] = pzf
    of[off + unique_depth] = pof
    pw[off + unique_depth] = 1.0 if unique_depth == 0 else 0.0
    for i in range(unique_depth - 1, -1, -1):
        pw[off + i + 1] += pof * pw[off + i] * (i + 1) / (<double>(unique_depth + 1))
        pw[off + i] = pzf * pw[off + i] * (unique_depth - i) / (<double>(unique_depth + 1))


cdef void _unwind(int* fi, double* zf, double* of, double* pw,
                  int off, int unique_depth, int path_index) noexcept nogil:
    cdef double one_fraction = of[off + path_index]
    cdef double zero_fraction = zf[off + path_index]
    cdef double next_one = pw[off + unique_depth]
    cdef double tmp
    cdef int i
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = pw[off + i]
            pw[off + i] = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            next_one = tmp - pw[off + i] * zero_fraction * (unique_depth - i) / (<double>(unique_depth + 1))
        else:
            pw[off + i] = pw[off + i] * (unique_depth + 1) / (zero_fraction * (unique_depth - i))
    for i in range(path_index, unique_depth):
        fi[off + i] = fi[off + i + 1]
        zf[off + i] = zf[off + i + 1]
        of[off + i] = of[off + i + 1]


cdef double _unwound_sum(double* zf, double* of, double* pw,
                         int off, int unique_depth, int path_index) noexcept nogil:
    cdef double one_fraction = of[off + path_index]
    cdef double zero_fraction = zf[off + path_index]
    cdef double next_one = pw[off + unique_depth]
    cdef double total = 0.0
    cdef double tmp
    cdef int i
    for i in range(unique_depth - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = next_one * (unique_depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one = pw[off + i] - tmp * zero_fraction * ((<double>(unique_depth - i)) / (<double>(unique_depth + 1)))
        else:
            total += (pw[off + i] / zero_fraction) / ((<double>(unique_depth - i)) / (<double>(unique_depth + 1)))
    return total


cdef void _recurse(const int* cleft, const int* cright, const unsigned char* mleft,
                   const int* feat, const double* thresh,
                   const double* leaf_val, const double* cover,
                   const double* x, double* phi,
                   int node, int unique_depth, int parent_off,
                   double pzf, double pof, int pfi,
                   int* fi, double* zf, double* of, double* pw) noexcept nogil:
    cdef int off = parent_off + unique_depth + 1
    cdef int i, split, hot, cold, path_index
    cdef double v, w, hot_zero_fraction, cold_zero_fraction
    cdef double incoming_zero, incoming_one, value, usum

    for i in range(unique_depth + 1):
        fi[off + i] = fi[parent_off + i]
        zf[off + i] = zf[parent_off + i]
        of[off + i] = of[parent_off + i]
        pw[off + i] = pw[parent_off + i]
    _extend(fi, zf, of, pw, off, unique_depth, pzf, pof, pfi)

    if cleft[node] < 0:
        value = leaf_val[node]
        for i in range(1, unique_depth + 1):
            usum = _unwound_sum(zf, of, pw, off, unique_depth, i)
            phi[fi[off + i]] += usum * (of[off + i] - zf[off + i]) * value
        return

    split = feat[node]
    v = x[split]
    if isnan(v):
        hot = cleft[node] if mleft[node] else cright[node]
    elif v < thresh[node]:
        hot = cleft[node]
    else:
        hot = cright[node]
    cold = cright[node] if hot == cleft[node] else cleft[node]

    w = cover[node]
    hot_zero_fraction = cover[hot] / w
    cold_zero_fraction = cover[cold] / w
    incoming_zero = 1.0
    incoming_one = 1.0

    path_index = 0
    while path_index <= unique_depth:
        if fi[off + path_index] == split:
            break
        path_index += 1
    if path_index != unique_depth + 1:
        incoming_zero = zf[off + path_index]
        incoming_one = of[off + path_index]
        _unwind(fi, zf, of, pw, off, unique_depth, path_index)
        unique_depth -= 1

    _recurse(cleft, cright, mleft, feat, thresh, leaf_val, cover,
             x, phi,
             hot, unique_depth + 1, off,
             hot_zero_fraction * incoming_zero, incoming_one, split,
             fi, zf, of, pw)
    _recurse(cleft, cright, mleft, feat, thresh, leaf_val, cover,
             x, phi,
             cold, unique_depth + 1, off,
             cold_zero_fraction * incoming_zero, 0.0, split,
             fi, zf, of, pw)


def shap_rows(int[::1] cleft, int[::1] cright, unsigned char[::1] mleft,
              int[::1] feat, double[::1] thresh,
              double[::1] leaf_val, double[::1] cover,
              int max_depth,
              double[:, ::1] X, double[:, ::1] phi,
              int row_start, int row_stop):
    """Accumulate one tree's Shapley contributions for rows [row_start, row_stop)."""
    cdef int levels = max_depth + 4
    cdef int size = levels * (levels + 1) // 2 + levels
    cdef int n_features = <int>phi.shape[1]
    cdef int* fi = <int*>malloc(size * sizeof(int))
    cdef double* zf = <double*>malloc(size * sizeof(double))
    cdef double* of = <double*>malloc(size * sizeof(double))
    cdef double* pw = <double*>malloc(size * sizeof(double))
    if fi == NULL or zf == NULL or of == NULL or pw == NULL:
        free(fi); free(zf); free(of); free(pw)
        raise MemoryError("could not allocate path scratch")
    cdef int r
    try:
        with nogil:
            for r in range(row_start, row_stop):
                _recurse(&cleft[0], &cright[0], &mleft[0], &feat[0], &thresh[0],
                         &leaf_val[0], &cover[0],
                         &X[r, 0], &phi[r, 0],
                         0, 0, 0, 1.0, 1.0, -1,
                         fi, zf, of, pw)
    finally:
        free(fi); free(zf); free(of); free(pw)
