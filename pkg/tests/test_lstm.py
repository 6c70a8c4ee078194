import math

import numpy as np
import pytest

from nara.lstm import LstmCell, lstm_sequence, lstm_sequence_backward, lstm_step
from nara.numeric import finite_difference_gradient, max_relative_error

from conftest import make_rng


def scalar_lstm_oracle(cell: LstmCell, xs, h0, c0):
    """Gate equations evaluated scalar by scalar with plain Python floats."""

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))

    H = cell.hidden_size
    D = cell.input_size
    h = [float(v) for v in h0]
    c = [float(v) for v in c0]
    outs = []
    for x in xs:
        z = []
        for r in range(4 * H):
            acc = float(cell.b[r])
            for k in range(D):
                acc += float(cell.wx[r, k]) * float(x[k])
            for k in range(H):
                acc += float(cell.wh[r, k]) * h[k]
            z.append(acc)
        new_h, new_c = [], []
        for k in range(H):
            i = sig(z[k])
            f = sig(z[H + k])
            g = math.tanh(z[2 * H + k])
            o = sig(z[3 * H + k])
            cv = f * c[k] + i * g
            new_c.append(cv)
            new_h.append(o * math.tanh(cv))
        h, c = new_h, new_c
        outs.append(list(h))
    return np.asarray(outs)


class TestForward:
    def test_zero_weights_zero_state_gives_zero_output(self):
        cell = LstmCell.zeros(2, 3)
        h, c = cell.zero_state()
        h1, c1 = lstm_step(cell, np.array([5.0, -3.0]), h, c)
        np.testing.assert_array_equal(h1, np.zeros(3))
        # cell state is sigmoid(0)*tanh(0) = 0 as well
        np.testing.assert_array_equal(c1, np.zeros(3))

    def test_deterministic(self, rng):
        cell = LstmCell.init(2, 3, rng)
        x = rng.normal(size=2)
        h0 = rng.normal(size=3)
        c0 = rng.normal(size=3)
        a = lstm_step(cell, x, h0, c0)
        b = lstm_step(cell, x, h0, c0)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_matches_scalar_oracle_on_random_cell(self):
        rng = make_rng(3)
        cell = LstmCell.init(2, 3, rng)
        xs = rng.normal(size=(4, 2))
        h0 = rng.normal(size=3)
        c0 = rng.normal(size=3)
        hs, _ = lstm_sequence(cell, xs, h0, c0)
        expected = scalar_lstm_oracle(cell, xs, h0, c0)
        np.testing.assert_allclose(hs, expected, rtol=1e-12, atol=1e-14)

    def test_sequence_equals_chained_steps_exactly(self, rng):
        cell = LstmCell.init(3, 4, rng)
        xs = rng.normal(size=(6, 3))
        h, c = cell.zero_state()
        stepped = []
        for t in range(6):
            h, c = lstm_step(cell, xs[t], h, c)
            stepped.append(h)
        hs, _ = lstm_sequence(cell, xs, *cell.zero_state())
        np.testing.assert_array_equal(hs, np.asarray(stepped))

    def test_shape_mismatch_rejected(self, rng):
        cell = LstmCell.init(3, 4, rng)
        with pytest.raises(ValueError):
            lstm_sequence(cell, rng.normal(size=(5, 2)), *cell.zero_state())


class TestBackward:
    def test_matches_finite_differences(self):
        for seed in range(10):
            rng = make_rng(100 + seed)
            cell = LstmCell.init(3, 4, rng)
            xs = rng.normal(size=(5, 3))
            w = rng.normal(size=(5, 4))  # random linear functional of the outputs
            h0 = rng.normal(size=4)
            c0 = rng.normal(size=4)
            _, tape = lstm_sequence(cell, xs, h0, c0)
            dwx, dwh, db, dx, dh0, dc0 = lstm_sequence_backward(cell, tape, w.copy())
            analytic = {"wx": dwx, "wh": dwh, "b": db, "xs": dx, "h0": dh0, "c0": dc0}
            params = {"wx": cell.wx, "wh": cell.wh, "b": cell.b, "xs": xs, "h0": h0, "c0": c0}

            def f(p):
                trial = LstmCell(wx=p["wx"], wh=p["wh"], b=p["b"])
                out, _ = lstm_sequence(trial, p["xs"], p["h0"], p["c0"])
                return float(np.sum(out * w))

            fd = finite_difference_gradient(f, params)
            assert max_relative_error(analytic, fd) < 1e-4

    def test_zero_upstream_gives_zero_grads(self, rng):
        cell = LstmCell.init(2, 3, rng)
        xs = rng.normal(size=(4, 2))
        _, tape = lstm_sequence(cell, xs, *cell.zero_state())
        dwx, dwh, db, dx, dh0, dc0 = lstm_sequence_backward(cell, tape, np.zeros((4, 3)))
        for g in (dwx, dwh, db, dx, dh0, dc0):
            assert not np.asarray(g).any()

    def test_cell_state_gradient_channel(self, rng):
        """dc_out must reach parameters through the cell-state chain."""
        cell = LstmCell.init(2, 3, rng)
        xs = rng.normal(size=(4, 2))
        w = rng.normal(size=3)
        _, tape = lstm_sequence(cell, xs, *cell.zero_state())
        dc_out = np.zeros((4, 3))
        dc_out[-1] = w
        dwx, *_ = lstm_sequence_backward(cell, tape, np.zeros((4, 3)), dc_out)
        params = {"wx": cell.wx}

        def f(p):
            trial = LstmCell(wx=p["wx"], wh=cell.wh, b=cell.b)
            _, t2 = lstm_sequence(trial, xs, *cell.zero_state())
            return float(np.sum(t2.cs[-1] * w))

        fd = finite_difference_gradient(f, params)
        assert max_relative_error({"wx": dwx}, fd) < 1e-4


class TestGateLayout:
    def test_gate_views_cover_all_rows(self, rng):
        cell = LstmCell.init(2, 5, rng)
        rows = 0
        for name in ("input", "forget", "cell", "output"):
            wxg, whg, bg = cell.gate(name)
            assert wxg.shape == (5, 2) and whg.shape == (5, 5) and bg.shape == (5,)
            rows += wxg.shape[0]
        assert rows == cell.wx.shape[0]

    def test_inconsistent_shapes_rejected(self):
        with pytest.raises(ValueError):
            LstmCell(wx=np.zeros((12, 2)), wh=np.zeros((12, 4)), b=np.zeros(12))
