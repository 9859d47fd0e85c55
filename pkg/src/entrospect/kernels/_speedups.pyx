# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled decision-tree kernels.

Mirrors kernels/pure.py operation for operation: same feature-subset PRNG,
same split-scan arithmetic and tie breaking, same preorder node layout.
The two implementations must stay bit-identical; tests enforce it.
"""

import numpy as np

ctypedef unsigned long long u64
ctypedef long long i64


cdef inline u64 _mix(u64* state) noexcept nogil:
    state[0] = state[0] + (<u64>0x9E3779B97F4A7C15)
    cdef u64 z = state[0]
    z = (z ^ (z >> 30)) * (<u64>0xBF58476D1CE4E5B9)
    z = (z ^ (z >> 27)) * (<u64>0x94D049BB133111EB)
    return z ^ (z >> 31)


cdef inline void _swap(double* v, i64* r, i64 a, i64 b) noexcept nogil:
    cdef double tv = v[a]
    cdef i64 tr = r[a]
    v[a] = v[b]
    v[b] = tv
    r[a] = r[b]
    r[b] = tr


cdef void _sort_pairs(double* v, i64* r, i64 left, i64 right) noexcept nogil:
    """Sort v[left..right] ascending, permuting r alongside."""
    cdef i64 stack_lo[160]
    cdef i64 stack_hi[160]
    cdef int top = 1
    cdef i64 lo, hi, i, j, mid, tr
    cdef double pivot
    if right <= left:
        return
    stack_lo[0] = left
    stack_hi[0] = right
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        while hi - lo > 16:
            mid = lo + ((hi - lo) >> 1)
            if v[mid] < v[lo]:
                _swap(v, r, lo, mid)
            if v[hi] < v[lo]:
                _swap(v, r, lo, hi)
            if v[hi] < v[mid]:
                _swap(v, r, mid, hi)
            pivot = v[mid]
            i = lo
            j = hi
            while i <= j:
                while v[i] < pivot:
                    i += 1
                while v[j] > pivot:
                    j -= 1
                if i <= j:
                    _swap(v, r, i, j)
                    i += 1
                    j -= 1
            if j - lo < hi - i:
                if i < hi:
                    stack_lo[top] = i
                    stack_hi[top] = hi
                    top += 1
                hi = j
            else:
                if lo < j:
                    stack_lo[top] = lo
                    stack_hi[top] = j
                    top += 1
                lo = i
        i = lo + 1
        while i <= hi:
            pivot = v[i]
            tr = r[i]
            j = i - 1
            while j >= lo and v[j] > pivot:
                v[j + 1] = v[j]
                r[j + 1] = r[j]
                j -= 1
            v[j + 1] = pivot
            r[j + 1] = tr
            i += 1


cdef int _draw_features(int n_features, int subset_size, u64* state, int* pool) noexcept nogil:
    cdef int k = subset_size if subset_size < n_features else n_features
    cdef int i, j, t
    for i in range(n_features):
        pool[i] = i
    if k == n_features:
        return k
    for i in range(k):
        j = i + <int>(_mix(state) % <u64>(n_features - i))
        t = pool[i]
        pool[i] = pool[j]
        pool[j] = t
    for i in range(1, k):
        t = pool[i]
        j = i - 1
        while j >= 0 and pool[j] > t:
            pool[j + 1] = pool[j]
            j -= 1
        pool[j + 1] = t
    return k


def build_tree(X, y, rows, subset_size, min_leaf, max_depth, seed):
    """Grow one Gini decision tree; see kernels/pure.py for the contract."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.uint8)
    rows = np.ascontiguousarray(rows, dtype=np.int64)

    cdef double[:, ::1] Xv = X
    cdef unsigned char[::1] yv = y
    cdef i64 m = rows.shape[0]
    cdef int n_features = X.shape[1]
    cdef int c_subset = int(subset_size)
    cdef i64 c_min_leaf = int(min_leaf)
    cdef int c_max_depth = int(max_depth)
    cdef u64 state = <u64>(int(seed) & ((1 << 64) - 1))

    cdef i64 cap = 2 * m + 1
    feature_arr = np.empty(cap, dtype=np.int32)
    threshold_arr = np.empty(cap, dtype=np.float64)
    left_arr = np.empty(cap, dtype=np.int32)
    right_arr = np.empty(cap, dtype=np.int32)
    value_arr = np.empty(cap, dtype=np.float64)
    importance_arr = np.zeros(n_features, dtype=np.float64)
    cdef int[::1] feat_v = feature_arr
    cdef double[::1] thr_v = threshold_arr
    cdef int[::1] left_v = left_arr
    cdef int[::1] right_v = right_arr
    cdef double[::1] val_v = value_arr
    cdef double[::1] imp_v = importance_arr

    seg_arr = rows.copy()
    cdef i64[::1] seg = seg_arr
    tmp_rows_arr = np.empty(m, dtype=np.int64)
    tmp_vals_arr = np.empty(m, dtype=np.float64)
    cdef i64[::1] tmp_rows = tmp_rows_arr
    cdef double[::1] tmp_vals = tmp_vals_arr
    pool_arr = np.empty(n_features, dtype=np.int32)
    cdef int[::1] pool = pool_arr

    cdef i64 stack_cap = 2 * m + 3
    st_start_arr = np.empty(stack_cap, dtype=np.int64)
    st_end_arr = np.empty(stack_cap, dtype=np.int64)
    st_depth_arr = np.empty(stack_cap, dtype=np.int64)
    st_parent_arr = np.empty(stack_cap, dtype=np.int64)
    st_isleft_arr = np.empty(stack_cap, dtype=np.int64)
    cdef i64[::1] st_start = st_start_arr
    cdef i64[::1] st_end = st_end_arr
    cdef i64[::1] st_depth = st_depth_arr
    cdef i64[::1] st_parent = st_parent_arr
    cdef i64[::1] st_isleft = st_isleft_arr

    cdef i64 top = 1
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    st_parent[0] = -1
    st_isleft[0] = 0

    cdef i64 n_nodes = 0
    cdef i64 start, end, depth, parent, is_left, node_id, m_node
    cdef i64 c1, t, i, nl, nr, c1l, best_i
    cdef int kf, fi, f, best_feature
    cdef double sy_total, fc1l, fc0l, fc1r, fc0r, fnl, fnr, s
    cdef double best_score, best_threshold, parent_term, node_value
    cdef bint can_split

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        parent = st_parent[top]
        is_left = st_isleft[top]
        node_id = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left:
                left_v[parent] = <int>node_id
            else:
                right_v[parent] = <int>node_id
        m_node = end - start
        c1 = 0
        for t in range(start, end):
            c1 += yv[seg[t]]
        node_value = (<double>c1) / (<double>m_node)
        can_split = (
            c1 > 0
            and c1 < m_node
            and m_node >= 2 * c_min_leaf
            and (c_max_depth < 0 or depth < c_max_depth)
        )
        best_score = float("inf")
        best_feature = -1
        best_threshold = 0.0
        best_i = -1
        if can_split:
            kf = _draw_features(n_features, c_subset, &state, &pool[0])
            sy_total = <double>c1
            for fi in range(kf):
                f = pool[fi]
                for t in range(m_node):
                    tmp_rows[t] = seg[start + t]
                    tmp_vals[t] = Xv[tmp_rows[t], f]
                _sort_pairs(&tmp_vals[0], &tmp_rows[0], 0, m_node - 1)
                c1l = 0
                for i in range(m_node - 1):
                    c1l += yv[tmp_rows[i]]
                    nl = i + 1
                    nr = m_node - nl
                    if tmp_vals[i] != tmp_vals[i + 1] and nl >= c_min_leaf and nr >= c_min_leaf:
                        fc1l = <double>c1l
                        fnl = <double>nl
                        fc0l = fnl - fc1l
                        fc1r = sy_total - fc1l
                        fnr = <double>m_node - fnl
                        fc0r = fnr - fc1r
                        s = 2.0 * fc1l * fc0l / fnl + 2.0 * fc1r * fc0r / fnr
                        if s < best_score:
                            best_score = s
                            best_feature = f
                            best_i = i
                            best_threshold = 0.5 * (tmp_vals[i] + tmp_vals[i + 1])
        if best_feature < 0:
            feat_v[node_id] = -1
            thr_v[node_id] = 0.0
            left_v[node_id] = -1
            right_v[node_id] = -1
            val_v[node_id] = node_value
            continue
        parent_term = 2.0 * (<double>c1) * (<double>(m_node - c1)) / (<double>m_node)
        imp_v[best_feature] += parent_term - best_score
        feat_v[node_id] = best_feature
        thr_v[node_id] = best_threshold
        left_v[node_id] = -1
        right_v[node_id] = -1
        val_v[node_id] = node_value
        # Re-sort the segment on the winning feature to partition in place.
        for t in range(m_node):
            tmp_rows[t] = seg[start + t]
            tmp_vals[t] = Xv[tmp_rows[t], best_feature]
        _sort_pairs(&tmp_vals[0], &tmp_rows[0], 0, m_node - 1)
        for t in range(m_node):
            seg[start + t] = tmp_rows[t]
        st_start[top] = start + best_i + 1
        st_end[top] = end
        st_depth[top] = depth + 1
        st_parent[top] = node_id
        st_isleft[top] = 0
        top += 1
        st_start[top] = start
        st_end[top] = start + best_i + 1
        st_depth[top] = depth + 1
        st_parent[top] = node_id
        st_isleft[top] = 1
        top += 1

    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr[:n_nodes].copy(),
        importance_arr,
    )


def predict_tree(feature, threshold, left, right, value, X):
    """Leaf value reached by every row of X; descends left when x <= threshold."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    feature = np.ascontiguousarray(feature, dtype=np.int32)
    threshold = np.ascontiguousarray(threshold, dtype=np.float64)
    left = np.ascontiguousarray(left, dtype=np.int32)
    right = np.ascontiguousarray(right, dtype=np.int32)
    value = np.ascontiguousarray(value, dtype=np.float64)

    cdef double[:, ::1] Xv = X
    cdef int[::1] feat_v = feature
    cdef double[::1] thr_v = threshold
    cdef int[::1] left_v = left
    cdef int[::1] right_v = right
    cdef double[::1] val_v = value

    cdef i64 k = X.shape[0]
    out_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef i64 row
    cdef int node
    for row in range(k):
        node = 0
        while feat_v[node] >= 0:
            if Xv[row, feat_v[node]] <= thr_v[node]:
                node = left_v[node]
            else:
                node = right_v[node]
        out[row] = val_v[node]
    return out_arr
