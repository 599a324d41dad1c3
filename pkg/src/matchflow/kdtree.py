"""Static kd-tree with best-bin-first approximate nearest-neighbor search.

The search budget counts visited leaves; with budget None the search
backtracks exhaustively and returns the exact nearest neighbor.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

_LEAF_SIZE = 8


@dataclass
class _Node:
    axis: int = -1
    split: float = 0.0
    left: int = -1
    right: int = -1
    start: int = 0
    stop: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.axis < 0


@dataclass
class KDTree:
    points: np.ndarray
    nodes: list[_Node] = field(default_factory=list)
    order: np.ndarray | None = None

    @classmethod
    def build(cls, points: np.ndarray) -> "KDTree":
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise InvalidInputError("kd-tree needs a non-empty (n, d) point array")
        tree = cls(points=points)
        order = np.arange(points.shape[0])
        tree._build(order, 0, points.shape[0])
        tree.order = order
        return tree

    def _build(self, order: np.ndarray, start: int, stop: int) -> int:
        node_id = len(self.nodes)
        self.nodes.append(_Node())
        n = stop - start
        if n <= _LEAF_SIZE:
            self.nodes[node_id] = _Node(start=start, stop=stop)
            return node_id
        idx = order[start:stop]
        sub = self.points[idx]
        axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        mid = n // 2
        part = np.argpartition(sub[:, axis], mid)
        order[start:stop] = idx[part]
        split = float(self.points[order[start + mid], axis])
        left = self._build(order, start, start + mid)
        right = self._build(order, start + mid, stop)
        self.nodes[node_id] = _Node(axis=axis, split=split, left=left, right=right, start=start, stop=stop)
        return node_id

    def query(self, point: np.ndarray, max_leaf_visits: int | None = 32) -> tuple[int, float]:
        """Approximate nearest neighbor of one query point.

        Returns (index into the original point array, Euclidean distance).
        Traversal is best-bin-first: pending branches are expanded in order
        of their distance lower bound until the leaf budget runs out.
        """
        point = np.asarray(point, dtype=np.float64)
        best_idx = -1
        best_d2 = np.inf
        visits = 0
        budget = np.inf if max_leaf_visits is None else max_leaf_visits
        counter = 0
        heap = [(0.0, counter, 0)]
        while heap:
            bound, _, node_id = heapq.heappop(heap)
            if bound * bound >= best_d2:
                continue
            node = self.nodes[node_id]
            while not node.is_leaf:
                delta = point[node.axis] - node.split
                if delta < 0.0:
                    near, far = node.left, node.right
                else:
                    near, far = node.right, node.left
                far_bound = max(bound, abs(delta))
                if far_bound * far_bound < best_d2:
                    counter += 1
                    heapq.heappush(heap, (far_bound, counter, far))
                node = self.nodes[near]
            if visits >= budget:
                break
            visits += 1
            idx = self.order[node.start:node.stop]
            d2 = np.sum((self.points[idx] - point) ** 2, axis=1)
            k = int(np.argmin(d2))
            if d2[k] < best_d2:
                best_d2 = float(d2[k])
                best_idx = int(idx[k])
        return best_idx, float(np.sqrt(best_d2))


def kd_nearest(tree: KDTree, query: np.ndarray, max_leaf_visits: int | None = 32) -> int:
    """Index of an approximate nearest neighbor (exact when unbudgeted)."""
    idx, _ = tree.query(query, max_leaf_visits=max_leaf_visits)
    return idx
