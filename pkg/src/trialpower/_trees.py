"""Compiled kernels for the from-scratch learners.

The algorithms (exact greedy depth-limited regression trees, stagewise
boosting on residuals, k-nearest-neighbor averaging) are implemented here
by hand; numba only compiles the loops. Keeping the kernels free of Python
objects is what makes the Monte-Carlo harness affordable on one core.

Tree layout: five flat arrays indexed by node id. ``feature[i] == -1``
marks a leaf; internal nodes send a row left when
``x[feature] <= threshold`` and right otherwise. ``value`` holds the node
mean, which at leaves is the prediction.

Tree construction presorts every feature once per fit and keeps each
feature's row ids in sorted order through stable partitions, so a tree
costs O(d * n * depth) after the initial O(d * n log n) sort instead of
re-sorting at every node.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _build_tree(X, y, pos, buf, mark, max_depth, min_samples_leaf,
                feature, threshold, value, left, right):
    """Grow one depth-limited tree; ``pos[f]`` holds row ids sorted by
    feature f and is partitioned in place as nodes split.

    Split search per node: for every feature, scan midpoints of sorted
    unique values and maximize the SSE reduction
    ``S_l^2/n_l + S_r^2/n_r - S^2/n``; ties keep the first (lowest
    feature index, then lowest threshold) candidate. Only strictly
    positive gains split; both children must hold min_samples_leaf rows.
    """
    n = y.shape[0]
    d = X.shape[1]
    max_nodes = feature.shape[0]

    stack_node = np.empty(max_nodes + 2, np.int64)
    stack_start = np.empty(max_nodes + 2, np.int64)
    stack_end = np.empty(max_nodes + 2, np.int64)
    stack_depth = np.empty(max_nodes + 2, np.int64)
    sp = 0
    stack_node[sp] = 0
    stack_start[sp] = 0
    stack_end[sp] = n
    stack_depth[sp] = 0
    sp += 1
    node_count = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        start = stack_start[sp]
        end = stack_end[sp]
        depth = stack_depth[sp]
        m = end - start

        sum_y = 0.0
        if d > 0:
            for i in range(start, end):
                sum_y += y[pos[0, i]]
        else:
            for i in range(start, end):
                sum_y += y[i]
        value[node] = sum_y / m
        feature[node] = -1
        left[node] = -1
        right[node] = -1

        if d == 0 or depth >= max_depth or m < 2 * min_samples_leaf or m < 2:
            continue

        base = sum_y * sum_y / m
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0

        for f in range(d):
            left_sum = 0.0
            x_prev = X[pos[f, start], f]
            for i in range(1, m):
                row_prev = pos[f, start + i - 1]
                left_sum += y[row_prev]
                x_next = X[pos[f, start + i], f]
                if x_prev < x_next and i >= min_samples_leaf and m - i >= min_samples_leaf:
                    right_sum = sum_y - left_sum
                    gain = left_sum * left_sum / i + right_sum * right_sum / (m - i) - base
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_thr = 0.5 * (x_prev + x_next)
                x_prev = x_next

        if best_f < 0:
            continue

        # Stable partition of every feature's sorted slice, driven by a
        # per-row left/right mark so all features agree on membership.
        n_left = 0
        for i in range(start, end):
            row = pos[best_f, i]
            if X[row, best_f] <= best_thr:
                mark[row] = True
                n_left += 1
            else:
                mark[row] = False
        for f in range(d):
            a = 0
            b = n_left
            for i in range(start, end):
                row = pos[f, i]
                if mark[row]:
                    buf[start + a] = row
                    a += 1
                else:
                    buf[start + b] = row
                    b += 1
            for i in range(start, end):
                pos[f, i] = buf[i]

        lchild = node_count
        rchild = node_count + 1
        node_count += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lchild
        right[node] = rchild

        stack_node[sp] = lchild
        stack_start[sp] = start
        stack_end[sp] = start + n_left
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = rchild
        stack_start[sp] = start + n_left
        stack_end[sp] = end
        stack_depth[sp] = depth + 1
        sp += 1

    return node_count


@njit(cache=True)
def _predict_tree(feature, threshold, value, left, right, X, out):
    n = X.shape[0]
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]


@njit(cache=True)
def boost_fit(X, y, n_trees, max_depth, learning_rate, min_samples_leaf):
    """Fit a gradient-boosted forest on squared error.

    Base prediction is mean(y); each tree fits the current residuals and
    contributes ``learning_rate`` times its leaf means. Returns the stacked
    node arrays, the base value, and the training-MSE path after each tree
    (nonincreasing by construction).
    """
    n = X.shape[0]
    d = X.shape[1]
    max_nodes = 2 ** (max_depth + 1) - 1

    features = np.full((n_trees, max_nodes), -1, np.int64)
    thresholds = np.zeros((n_trees, max_nodes), np.float64)
    values = np.zeros((n_trees, max_nodes), np.float64)
    lefts = np.full((n_trees, max_nodes), -1, np.int64)
    rights = np.full((n_trees, max_nodes), -1, np.int64)
    train_mse_path = np.empty(n_trees, np.float64)

    base = 0.0
    for i in range(n):
        base += y[i]
    base /= n

    residual = np.empty(n, np.float64)
    for i in range(n):
        residual[i] = y[i] - base

    # one sort per feature per fit; trees start from a copy of it
    sorted_root = np.empty((d, n), np.int64)
    col = np.empty(n, np.float64)
    for f in range(d):
        for i in range(n):
            col[i] = X[i, f]
        sorted_root[f] = np.argsort(col)

    pos = np.empty((d, n), np.int64)
    buf = np.empty(n, np.int64)
    mark = np.zeros(n, np.bool_)
    pred = np.empty(n, np.float64)

    for t in range(n_trees):
        pos[:] = sorted_root
        _build_tree(X, residual, pos, buf, mark, max_depth, min_samples_leaf,
                    features[t], thresholds[t], values[t], lefts[t], rights[t])
        _predict_tree(features[t], thresholds[t], values[t], lefts[t], rights[t], X, pred)
        sse = 0.0
        for i in range(n):
            residual[i] -= learning_rate * pred[i]
            sse += residual[i] * residual[i]
        train_mse_path[t] = sse / n

    return features, thresholds, values, lefts, rights, base, train_mse_path


@njit(cache=True)
def boost_predict(features, thresholds, values, lefts, rights, base, learning_rate, X):
    n = X.shape[0]
    n_trees = features.shape[0]
    out = np.empty(n, np.float64)
    for r in range(n):
        acc = base
        for t in range(n_trees):
            node = 0
            while features[t, node] >= 0:
                if X[r, features[t, node]] <= thresholds[t, node]:
                    node = lefts[t, node]
                else:
                    node = rights[t, node]
            acc += learning_rate * values[t, node]
        out[r] = acc
    return out


@njit(cache=True)
def knn_predict(X_train, y_train, X_query, k):
    """Mean response of the k nearest training rows (squared Euclidean).

    Distance ties are broken toward the lower training-row index; because
    candidates arrive in index order, an incoming row never displaces an
    equally distant earlier one.
    """
    n_train = X_train.shape[0]
    n_query = X_query.shape[0]
    d = X_train.shape[1]
    out = np.empty(n_query, np.float64)

    best_d = np.empty(k, np.float64)
    best_i = np.empty(k, np.int64)
    for q in range(n_query):
        for t in range(k):
            best_d[t] = np.inf
            best_i[t] = n_train
        worst = k - 1
        for j in range(n_train):
            dist = 0.0
            for c in range(d):
                diff = X_query[q, c] - X_train[j, c]
                dist += diff * diff
            if dist < best_d[worst]:
                pos = worst
                while pos > 0 and dist < best_d[pos - 1]:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = dist
                best_i[pos] = j
        acc = 0.0
        for t in range(k):
            acc += y_train[best_i[t]]
        out[q] = acc / k
    return out
