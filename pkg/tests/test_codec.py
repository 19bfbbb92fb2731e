import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bfipin import codec
from bfipin.codec import AngleReport, Codebook, CodecError, StreamConfig

ALL_CODEBOOKS = [Codebook(*cb) for cb in codec.CODEBOOKS]


def random_report(rng, config, codebook):
    hi = np.where(config.phi_mask, 2**codebook.bits_phi, 2**codebook.bits_psi)
    angles = rng.integers(0, hi, size=(config.n_sub, config.n_angles))
    return AngleReport(config, codebook, angles)


def random_orthonormal(rng, n, n_tx=4, n_stream=2):
    z = rng.normal(size=(n, n_tx, n_stream)) + 1j * rng.normal(size=(n, n_tx, n_stream))
    q, _ = np.linalg.qr(z)
    return q


def column_angles(a, b):
    """Per-column principal angle, insensitive to column phase."""
    inner = np.abs(np.einsum("...kc,...kc->...c", a.conj(), b))
    return np.arccos(np.clip(inner, 0.0, 1.0))


def ladder_oracle(phi_psi, n_tx, n_stream):
    """Explicit dense product of D_i and G^T factors, no vectorization."""
    layout = codec.angle_layout(n_tx, n_stream)
    vals = dict(zip(layout, phi_psi))
    m = np.eye(n_tx, dtype=complex)
    for i in range(1, min(n_stream, n_tx - 1) + 1):
        d = np.ones(n_tx, dtype=complex)
        for k in range(i, n_tx):
            d[k - 1] = np.exp(1j * vals[("phi", k, i)])
        m = m @ np.diag(d)
        for l in range(i + 1, n_tx + 1):
            m = m @ codec.givens_matrix(n_tx, i, l, vals[("psi", l, i)]).T
    return m @ np.eye(n_tx, n_stream)


class TestAngleCount:
    @pytest.mark.parametrize("n_tx,n_stream,expected", [(4, 2, 10), (2, 1, 2), (3, 2, 6)])
    def test_examples(self, n_tx, n_stream, expected):
        assert codec.angle_count(n_tx, n_stream) == expected

    @pytest.mark.parametrize("n_tx,n_stream", [(2, 1), (3, 2), (4, 2), (3, 3), (4, 1)])
    def test_matches_jacobian_rank(self, n_tx, n_stream):
        # local dimension of the angle->V map equals the number of angles
        rng = np.random.default_rng(1)
        n = codec.angle_count(n_tx, n_stream)
        layout = codec.angle_layout(n_tx, n_stream)
        x = np.array([rng.uniform(0.3, 2 * math.pi - 0.3) if k == "phi" else rng.uniform(0.2, 1.3)
                      for k, _, _ in layout])
        h = 1e-6
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            dv = (ladder_oracle(x + e, n_tx, n_stream) - ladder_oracle(x - e, n_tx, n_stream)) / (2 * h)
            cols.append(np.concatenate([dv.real.ravel(), dv.imag.ravel()]))
        assert np.linalg.matrix_rank(np.array(cols).T, tol=1e-6) == n
        # and the Stiefel dimension minus one phase per column
        assert n == 2 * n_tx * n_stream - n_stream**2 - n_stream

    @pytest.mark.parametrize("n_tx,n_stream", [(2, 3), (0, 1), (3, 0)])
    def test_invalid(self, n_tx, n_stream):
        with pytest.raises(CodecError) as err:
            codec.angle_count(n_tx, n_stream)
        assert err.value.kind == "invalid-config"

    def test_reference_report_shape(self):
        cfg = StreamConfig()
        assert cfg.n_sub * cfg.n_angles == 2340

    def test_standard_order(self):
        assert codec.angle_layout(4, 2) == [
            ("phi", 1, 1), ("phi", 2, 1), ("phi", 3, 1),
            ("psi", 2, 1), ("psi", 3, 1), ("psi", 4, 1),
            ("phi", 2, 2), ("phi", 3, 2),
            ("psi", 3, 2), ("psi", 4, 2),
        ]


class TestQuantization:
    def test_dequantize_examples(self):
        cb = Codebook(6, 4)
        assert codec.dequantize(0, "phi", cb) == pytest.approx(math.pi / 64)
        assert codec.dequantize(63, "phi", cb) == pytest.approx(2 * math.pi - math.pi / 64)
        assert codec.dequantize(0, "psi", cb) == pytest.approx(math.pi / 64)

    @pytest.mark.parametrize("cb", ALL_CODEBOOKS)
    def test_grid_ranges(self, cb):
        phi = codec.dequantize(np.arange(2**cb.bits_phi), "phi", cb)
        psi = codec.dequantize(np.arange(2**cb.bits_psi), "psi", cb)
        assert phi.min() > 0 and phi.max() < 2 * math.pi
        assert psi.min() > 0 and psi.max() < math.pi / 2
        # grid symmetric about pi
        np.testing.assert_allclose(phi + phi[::-1], 2 * math.pi)

    def test_out_of_range(self):
        with pytest.raises(CodecError, match="index-out-of-range"):
            codec.dequantize(64, "phi", Codebook(6, 4))
        with pytest.raises(CodecError, match="index-out-of-range"):
            codec.dequantize(-1, "psi", Codebook(6, 4))

    @pytest.mark.parametrize("cb", ALL_CODEBOOKS)
    def test_grid_points_are_fixed_points(self, cb):
        for kind, bits in (("phi", cb.bits_phi), ("psi", cb.bits_psi)):
            k = np.arange(2**bits)
            np.testing.assert_array_equal(codec.quantize(codec.dequantize(k, kind, cb), kind, cb), k)

    def test_nearest_by_brute_force(self):
        cb = Codebook(6, 4)
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 2 * math.pi, 2000)
        grid = codec.dequantize(np.arange(64), "phi", cb)
        circ = np.abs(np.angle(np.exp(1j * (x[:, None] - grid[None, :]))))
        np.testing.assert_array_equal(codec.quantize(x, "phi", cb), circ.argmin(axis=1))
        y = rng.uniform(0, math.pi / 2, 2000)
        gpsi = codec.dequantize(np.arange(16), "psi", cb)
        np.testing.assert_array_equal(codec.quantize(y, "psi", cb),
                                      np.abs(y[:, None] - gpsi[None, :]).argmin(axis=1))

    def test_ties_go_low(self):
        cb = Codebook(6, 4)
        mid = 0.5 * (codec.dequantize(3, "psi", cb) + codec.dequantize(4, "psi", cb))
        assert codec.quantize(mid, "psi", cb) == 3
        midphi = 0.5 * (codec.dequantize(10, "phi", cb) + codec.dequantize(11, "phi", cb))
        assert codec.quantize(midphi, "phi", cb) == 10
        # phi = 0 is equidistant from index 0 and the last index
        assert codec.quantize(0.0, "phi", cb) == 0


class TestLadder:
    @pytest.mark.parametrize("n_tx,n_stream", [(2, 1), (3, 2), (4, 2), (4, 3), (3, 3)])
    def test_vectorized_matches_dense_oracle(self, n_tx, n_stream):
        rng = np.random.default_rng(7)
        cfg = StreamConfig(n_tx, n_stream, 1)
        for _ in range(20):
            x = np.where(cfg.phi_mask, rng.uniform(0, 2 * math.pi, cfg.n_angles),
                         rng.uniform(0, math.pi / 2, cfg.n_angles))
            np.testing.assert_allclose(codec.decompress_angles(x, cfg),
                                       ladder_oracle(x, n_tx, n_stream), atol=1e-12)

    def test_signed_identity(self):
        # (2,1): phi ~ pi, psi ~ 0 -> column ~ -e1
        cb = Codebook(9, 7)
        cfg = StreamConfig(2, 1, 1)
        k_phi = codec.quantize(math.pi, "phi", cb)
        k_psi = 0
        v = codec.decompress(AngleReport(cfg, cb, [[k_phi, k_psi]]))
        np.testing.assert_allclose(v[0], [[-1], [0]], atol=0.02)
        # (4,2): columns -e1 and +e2
        cfg = StreamConfig()
        idx = np.where(cfg.phi_mask, k_phi, 0)[None, :].repeat(cfg.n_sub, 0)
        v = codec.decompress(AngleReport(cfg, cb, idx))
        np.testing.assert_allclose(v[0], [[-1, 0], [0, 1], [0, 0], [0, 0]], atol=0.03)

    def test_identity_columns_compress_near_pi_and_zero(self):
        cb = Codebook(9, 7)
        v = np.eye(4, 2)[None].astype(complex)
        idx = codec.compress(v, cb).angles[0]
        cfg = StreamConfig(4, 2, 1)
        phis = codec.dequantize(idx[cfg.phi_mask], "phi", cb)
        psis = codec.dequantize(idx[~cfg.phi_mask], "psi", cb)
        # phase of a zero-free identity column is 0: nearest phi grid points
        assert set(idx[cfg.phi_mask]) <= {0, 2**cb.bits_phi - 1}
        np.testing.assert_array_equal(idx[~cfg.phi_mask], 0)
        assert np.all(np.minimum(phis, 2 * math.pi - phis) <= math.pi / 2**cb.bits_phi + 1e-12)
        assert np.all(psis <= math.pi / 2 ** (cb.bits_psi + 2) + 1e-12)


class TestCompressDecompress:
    @pytest.mark.parametrize("cb", ALL_CODEBOOKS)
    def test_decompress_invariants_and_identity(self, cb):
        rng = np.random.default_rng(11)
        cfg = StreamConfig()
        for _ in range(5):
            r = random_report(rng, cfg, cb)
            v = codec.decompress(r)
            gram = np.conj(np.swapaxes(v, -1, -2)) @ v
            assert np.abs(gram - np.eye(2)).max() < 1e-6
            assert np.all(v[:, -1, :].imag == 0)
            assert np.all(v[:, -1, :].real >= 0)
            assert codec.compress(v, cb) == r

    def test_round_trip_error_bound_finest(self):
        rng = np.random.default_rng(5)
        v = random_orthonormal(rng, 1000)
        cb = Codebook(9, 7)
        w = codec.decompress(codec.compress(v, cb, as_indices=True), StreamConfig(4, 2, 1000), cb)
        assert column_angles(v, w).max() < 0.02

    def test_error_decreases_with_bits(self):
        rng = np.random.default_rng(6)
        v = random_orthonormal(rng, 1000)
        errs = []
        for cb in ALL_CODEBOOKS:
            w = codec.decompress(codec.compress(v, cb, as_indices=True), StreamConfig(4, 2, 1000), cb)
            errs.append(column_angles(v, w).max())
        assert all(a > b for a, b in zip(errs, errs[1:]))

    def test_idempotent(self):
        rng = np.random.default_rng(8)
        v = random_orthonormal(rng, 234)
        cb = Codebook(7, 5)
        r1 = codec.compress(v, cb)
        r2 = codec.compress(codec.decompress(r1), cb)
        assert r1 == r2

    def test_phase_invariance(self):
        # column phases are not carried by the feedback
        rng = np.random.default_rng(9)
        v = random_orthonormal(rng, 50)
        ph = np.exp(1j * rng.uniform(0, 2 * math.pi, (50, 1, 2)))
        cb = Codebook()
        np.testing.assert_array_equal(codec.compress(v, cb).angles, codec.compress(v * ph, cb).angles)

    def test_non_orthonormal_rejected(self):
        v = np.ones((3, 4, 2), dtype=complex)
        with pytest.raises(CodecError) as err:
            codec.compress(v)
        assert err.value.kind == "non-orthonormal-input"

    def test_report_validation(self):
        cfg = StreamConfig(4, 2, 2)
        with pytest.raises(CodecError):
            AngleReport(cfg, Codebook(6, 4), np.full((2, 10), 64))
        with pytest.raises(CodecError):
            AngleReport(cfg, Codebook(6, 4), np.zeros((3, 10)))
        with pytest.raises(CodecError):
            Codebook(8, 6)


class TestPayload:
    def test_length_reference_shape(self):
        assert codec.payload_length(StreamConfig(), Codebook(9, 7)) == 2340

    def test_all_zero_payload(self):
        cfg, cb = StreamConfig(4, 2, 1), Codebook(6, 4)
        n = codec.payload_length(cfg, cb)
        assert n == 7  # 5 phi x 6 bits + 5 psi x 4 bits = 50 bits
        r = codec.parse_payload(bytes(n), cfg, cb)
        np.testing.assert_array_equal(r.angles, 0)

    def test_bit_order_oracle(self):
        # pack by string concatenation, independent of the numpy path
        rng = np.random.default_rng(2)
        cfg, cb = StreamConfig(3, 2, 5), Codebook(7, 5)
        r = random_report(rng, cfg, cb)
        widths = cb.bits(cfg)
        s = "".join(format(int(a), f"0{w}b") for row in r.angles for a, w in zip(row, widths))
        s += "0" * (-len(s) % 8)
        expected = bytes(int(s[i:i + 8], 2) for i in range(0, len(s), 8))
        assert codec.serialize_payload(r) == expected

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 3), st.integers(1, 40), st.integers(0, 2**32 - 1))
    def test_round_trip_random(self, cb_i, n_sub, seed):
        rng = np.random.default_rng(seed)
        cfg, cb = StreamConfig(4, 2, n_sub), ALL_CODEBOOKS[cb_i]
        r = random_report(rng, cfg, cb)
        p = codec.serialize_payload(r)
        assert len(p) == codec.payload_length(cfg, cb)
        assert codec.parse_payload(p, cfg, cb) == r
        assert codec.serialize_payload(codec.parse_payload(p, cfg, cb)) == p

    def test_round_trip_thousand(self):
        rng = np.random.default_rng(12)
        cfg = StreamConfig()
        for i in range(1000):
            cb = ALL_CODEBOOKS[i % 4]
            r = random_report(rng, cfg, cb)
            p = codec.serialize_payload(r)
            assert codec.serialize_payload(codec.parse_payload(p, cfg, cb)) == p

    def test_truncated(self):
        cfg, cb = StreamConfig(), Codebook()
        with pytest.raises(CodecError) as err:
            codec.parse_payload(bytes(2339), cfg, cb)
        assert err.value.kind == "truncated-payload"

    def test_reserved_bits(self):
        cfg, cb = StreamConfig(4, 2, 1), Codebook(6, 4)
        p = bytearray(7)
        p[-1] = 0x01  # 50 bits used, trailing 6 must be zero
        with pytest.raises(CodecError) as err:
            codec.parse_payload(bytes(p), cfg, cb)
        assert err.value.kind == "reserved-bit"


def test_jsonl_round_trip():
    rng = np.random.default_rng(4)
    reports = [random_report(rng, StreamConfig(4, 2, 8), Codebook(9, 7)) for _ in range(3)]
    for i, r in enumerate(reports):
        r.timestamp = i / 18
    buf = io.StringIO()
    codec.write_jsonl(reports, buf)
    lines = buf.getvalue().splitlines()
    assert all(l.startswith('{"t":') for l in lines)
    assert list(codec.read_jsonl(lines)) == reports
    obj = codec.report_to_json(reports[0])
    assert obj["cfg"] == [4, 2, 8] and obj["cb"] == [9, 7]
    assert obj["payload"] == obj["payload"].lower()


def test_jsonl_bad_record():
    with pytest.raises(CodecError):
        list(codec.read_jsonl(['{"t": 0, "cfg": [4,2,1]}']))
