import itertools

import numpy as np
import pytest

from matrixse.routing import (
    PermKind,
    build_flatten_table,
    build_qshuffle_table,
    compose,
    grid_exponent,
    pad_grid,
    qrotate,
    zorder_index,
)

KS = range(1, 7)


def base4_digits(x, k):
    return [(x >> (2 * i)) & 3 for i in reversed(range(k))]


def interleave_halves(n):
    """Row order produced by splitting rows in two halves and interleaving them."""
    half = n // 2
    return [v for pair in zip(range(half), range(half, n)) for v in pair]


def quadtree_order(k):
    """Depth-first quadtree traversal written recursively, independent of bit tricks."""
    def visit(r0, c0, size):
        if size == 1:
            yield (r0, c0)
            return
        h = size // 2
        for dr, dc in ((0, 0), (0, 1), (1, 0), (1, 1)):
            yield from visit(r0 + dr * h, c0 + dc * h, h)
    return list(visit(0, 0, 1 << k))


class TestZorderIndex:
    def test_top_left_quad(self):
        assert [zorder_index(r, c, 1) for r, c in [(0, 0), (0, 1), (1, 0), (1, 1)]] == [0, 1, 2, 3]

    def test_row_bit_is_more_significant(self):
        assert zorder_index(2, 0, 2) == 8

    def test_last_cell(self):
        for k in KS:
            assert zorder_index((1 << k) - 1, (1 << k) - 1, k) == 4**k - 1

    @pytest.mark.parametrize("rc", [(-1, 0), (0, 4), (4, 4)])
    def test_out_of_range(self, rc):
        with pytest.raises(ValueError):
            zorder_index(*rc, 2)

    @pytest.mark.parametrize("k", KS)
    def test_equals_depth_first_quadtree(self, k):
        order = quadtree_order(k)
        assert [zorder_index(r, c, k) for r, c in order] == list(range(4**k))


class TestFlatten:
    def test_two_by_two(self):
        grid = np.array([["a", "b"], ["c", "d"]])
        assert list(grid.ravel()[build_flatten_table(1, "zorder").table]) == ["a", "b", "c", "d"]

    def test_k2_row1_col0_lands_at_2(self):
        table = build_flatten_table(2, "zorder").table
        assert table[2] == 1 * 4 + 0

    def test_raster_is_identity(self):
        for k in KS:
            np.testing.assert_array_equal(build_flatten_table(k, "raster").table, np.arange(4**k))

    @pytest.mark.parametrize("k", KS)
    def test_matches_quadtree(self, k):
        side = 1 << k
        expected = [r * side + c for r, c in quadtree_order(k)]
        np.testing.assert_array_equal(build_flatten_table(k, "zorder").table, expected)

    def test_tables_are_cached_and_read_only(self):
        t = build_flatten_table(3, "zorder")
        assert t is build_flatten_table(3, PermKind.ZORDER_FLATTEN)
        with pytest.raises(ValueError):
            t.table[0] = 1


class TestQrotate:
    def test_example(self):
        assert qrotate(6, 3, "right") == 33

    @pytest.mark.parametrize("k", KS)
    def test_digit_rotation_and_inverse(self, k):
        for x in range(4**k):
            d = base4_digits(x, k)
            right = d[-1:] + d[:-1]
            assert base4_digits(qrotate(x, k, "right"), k) == right
            assert qrotate(qrotate(x, k, "right"), k, "left") == x

    @pytest.mark.parametrize("k", range(1, 5))
    def test_k_rotations_are_identity(self, k):
        for x in range(4**k):
            y = x
            for _ in range(k):
                y = qrotate(y, k, "right")
            assert y == x

    def test_errors(self):
        with pytest.raises(ValueError):
            qrotate(16, 2)
        with pytest.raises(ValueError):
            qrotate(1, 2, "up")


class TestQshuffle:
    def test_k1_identity(self):
        np.testing.assert_array_equal(build_qshuffle_table(1, "right").table, np.arange(4))

    def test_k2_right_example(self):
        x = np.arange(16) * 10
        out = x[build_qshuffle_table(2, "right").table]
        assert out[1] == x[4]


@pytest.mark.parametrize("k", KS)
class TestExhaustive:
    """Bijection, inverse composition, locality, prefix stability, 2D equivalence."""

    def test_bijections(self, k):
        n = 4**k
        tables = [build_flatten_table(k, kind) for kind in PermKind if "flatten" in kind.value]
        tables += [build_qshuffle_table(k, d) for d in ("right", "left")]
        for t in tables:
            assert sorted(t.table.tolist()) == list(range(n)), t.kind
            np.testing.assert_array_equal(t.table[t.inverse], np.arange(n))

    def test_inverse_compositions(self, k):
        ident = np.arange(4**k)
        r, l = build_qshuffle_table(k, "right"), build_qshuffle_table(k, "left")
        np.testing.assert_array_equal(compose(r, l), ident)
        np.testing.assert_array_equal(compose(l, r), ident)
        f, u = build_flatten_table(k, PermKind.ZORDER_FLATTEN), build_flatten_table(k, PermKind.ZORDER_UNFLATTEN)
        np.testing.assert_array_equal(compose(f, u), ident)
        np.testing.assert_array_equal(compose(u, f), ident)

    def test_quad_locality(self, k):
        side = 1 << k
        pos = np.empty(4**k, dtype=int)
        pos[build_flatten_table(k, "zorder").table] = np.arange(4**k)
        pos = pos.reshape(side, side)
        for level in range(1, k + 1):
            q = 1 << level
            for r0, c0 in itertools.product(range(0, side, q), repeat=2):
                block = np.sort(pos[r0:r0 + q, c0:c0 + q].ravel())
                assert block[0] % (q * q) == 0
                np.testing.assert_array_equal(block, np.arange(block[0], block[0] + q * q))

    def test_prefix_stability(self, k):
        side = 1 << k
        table = build_flatten_table(k, "zorder").table
        for j in range(k + 1):
            cells = {(int(t) // side, int(t) % side) for t in table[: 4**j]}
            assert cells == set(itertools.product(range(1 << j), repeat=2))

    def test_shuffle_is_row_column_interleave(self, k):
        side = 1 << k
        rows = interleave_halves(side)
        matrix = np.arange(side * side).reshape(side, side)
        expected = matrix[rows][:, rows]
        flat = build_flatten_table(k, PermKind.ZORDER_FLATTEN).table
        unflat = build_flatten_table(k, PermKind.ZORDER_UNFLATTEN).table
        seq = matrix.ravel()[flat][build_qshuffle_table(k, "right").table]
        np.testing.assert_array_equal(seq[unflat].reshape(side, side), expected)


class TestPadding:
    def test_grid_exponent(self):
        assert [grid_exponent(n) for n in (1, 2, 3, 4, 5, 9, 16, 17)] == [1, 1, 2, 2, 3, 4, 4, 5]

    def test_pad_bottom_right(self):
        out = pad_grid(np.ones((3, 2), dtype=int), 7)
        assert out.shape == (4, 4)
        assert out[:3, :2].sum() == 6 and (out[3] == 7).all() and (out[:, 2:] == 7).all()

    def test_pad_too_small(self):
        with pytest.raises(ValueError):
            pad_grid(np.ones((5, 5)), 0, side=4)
