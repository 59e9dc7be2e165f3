import csv
import json

import numpy as np
import pytest

from dopedmat.bench import (emit_report, instrumented_csr_matvec,
                            instrumented_doped_macs,
                            instrumented_structured_matvec, time_matvec)
from dopedmat.doped import (make_doped, mac_count_entry, structured_macs,
                            make_structured)
from dopedmat.kron import KroneckerPair, kp_mac_orders, kp_matvec
from dopedmat.sparse import csr_from_dense, csr_matvec


class TestInstrumentedAgreement:
    def test_formula_matches_instrumented_kp_reference_shapes(self):
        # 2600 x 1300 split as (52 x 65) kron (50 x 20)
        rng = np.random.default_rng(0)
        kp = KroneckerPair(rng.standard_normal((52, 65)),
                           rng.standard_normal((50, 20)))
        x = rng.standard_normal(1300)
        y, macs = instrumented_structured_matvec(kp, x)
        assert macs == 119_600
        assert macs == min(kp_mac_orders(kp))
        np.testing.assert_allclose(y, kp_matvec(kp, x), atol=1e-9)

    def test_csr_counts_exactly_nnz(self):
        rng = np.random.default_rng(1)
        dense = rng.standard_normal((30, 40)) * (rng.random((30, 40)) > 0.9)
        s = csr_from_dense(dense)
        x = rng.standard_normal(40)
        y, macs = instrumented_csr_matvec(s, x)
        assert macs == s.nnz
        np.testing.assert_allclose(y, csr_matvec(s, x), atol=1e-12)

    @pytest.mark.parametrize("variant", ["kp", "lmf", "hmd"])
    def test_random_configs_formula_equals_instrumented(self, variant):
        rng = np.random.default_rng(42)
        trials = 0
        while trials < 50:
            m = int(rng.integers(2, 9)) * int(rng.integers(2, 9))
            n = int(rng.integers(2, 9)) * int(rng.integers(2, 9))
            try:
                w = make_doped(m, n, variant, target_cf=float(rng.uniform(2, 6)),
                               rng=rng)
            except ValueError:
                continue  # budget infeasible for this variant at this shape
            # prune to a random sparsity so the CSR term is non-trivial
            keep = rng.random((m, n)) < rng.uniform(0.05, 0.5)
            w.mask = keep
            w.ws *= w.mask
            x = rng.standard_normal(n)
            y, macs_k, macs_s = instrumented_doped_macs(w, x)
            entry = mac_count_entry(w)
            assert macs_k == entry["structured_macs"] == structured_macs(w.structured)
            assert macs_s == entry["sparse_macs"] == int(w.mask.sum())
            from dopedmat.doped import doped_forward
            np.testing.assert_allclose(y, doped_forward(w, x), atol=1e-9)
            trials += 1

    def test_batched_equivalent_shapes(self):
        rng = np.random.default_rng(3)
        for variant in ("kp", "lmf", "hmd"):
            term = make_structured(variant, 12, 8, rng)
            x = rng.standard_normal(8)
            y, macs = instrumented_structured_matvec(term, x)
            assert macs == structured_macs(term)


class TestTiming:
    def test_dense_self_speedup_near_one(self):
        # same kernel timed twice; generous bounds to tolerate machine load
        r = time_matvec("dense", 256, 256, iters=200, warmup=50)
        assert 0.75 <= r.speedup <= 1.35

    def test_macs_recorded(self):
        r = time_matvec("kp", 64, 64, kp_shapes=(8, 8, 8, 8), iters=30)
        kp = KroneckerPair(np.zeros((8, 8)), np.zeros((8, 8)))
        assert r.macs == min(kp_mac_orders(kp))
        r = time_matvec("csr", 64, 64, sparsity=0.95, iters=30)
        assert r.macs < 64 * 64 * 0.15

    def test_validation(self):
        with pytest.raises(ValueError):
            time_matvec("blocked", 8, 8)
        with pytest.raises(ValueError):
            time_matvec("kp", 8, 8)  # missing shapes
        with pytest.raises(ValueError):
            time_matvec("kp", 8, 8, kp_shapes=(3, 2, 2, 4))
        with pytest.raises(ValueError):
            time_matvec("csr", 8, 8, sparsity=1.0)


class TestEmitReport:
    def make_results(self):
        return [time_matvec("dense", 32, 32, iters=30, warmup=10),
                time_matvec("csr", 32, 32, sparsity=0.9, iters=30, warmup=10)]

    def test_csv_json_round_trip(self, tmp_path):
        results = self.make_results()
        cp, jp = tmp_path / "r.csv", tmp_path / "r.json"
        emit_report(results, cp, jp)
        with open(cp) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2
        # repr-format floats round-trip exactly through the CSV
        assert float(rows[0]["median_s"]) == results[0].median_s
        assert float(rows[1]["speedup"]) == results[1].speedup
        assert int(rows[1]["macs"]) == results[1].macs
        with open(jp) as f:
            jrows = json.load(f)
        assert jrows[0]["median_s"] == results[0].median_s
        assert jrows[1]["kind"] == "csr"

    def test_rewrite_is_byte_identical(self, tmp_path):
        results = self.make_results()
        c1, j1 = tmp_path / "a.csv", tmp_path / "a.json"
        c2, j2 = tmp_path / "b.csv", tmp_path / "b.json"
        emit_report(results, c1, j1)
        emit_report(results, c2, j2)
        assert c1.read_bytes() == c2.read_bytes()
        assert j1.read_bytes() == j2.read_bytes()

    def test_empty_raises(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], tmp_path / "x.csv", tmp_path / "x.json")
