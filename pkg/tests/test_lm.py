import numpy as np
import pytest

from dopedmat.lm import (LayerSpec, LstmLayer, TrainConfig, TrainingDiverged,
                         build_model, build_vocab, batchify, clip_global_norm,
                         evaluate_perplexity, freeze_model, lstm_step,
                         model_mac_report, run_window, train)


def toy_config(**overrides):
    base = dict(hidden_size=8, embed_size=8, num_layers=1, bptt=4, batch_size=2,
                epochs=1, lr=0.1, dropout=0.0, l2=0.0, max_vocab=50,
                valid_fraction=0.0, seed=0, cmr_kind="off",
                layer_specs=[LayerSpec(variant="dense")])
    base.update(overrides)
    return TrainConfig(**base)


def toy_tokens(n=400, vocab=12, seed=0):
    rng = np.random.default_rng(seed)
    return [f"w{i}" for i in rng.integers(0, vocab, size=n)]


class TestVocab:
    def test_frequency_order(self):
        v = build_vocab("a b a".split(), 10)
        assert v.token_to_id == {"<unk>": 0, "a": 1, "b": 2}

    def test_max_size_one(self):
        v = build_vocab("a b c".split(), 1)
        assert v.size == 1 and v.id_to_token == ["<unk>"]

    def test_deterministic(self):
        toks = "the cat sat on the mat".split()
        assert build_vocab(toks, 10).token_to_id == build_vocab(toks, 10).token_to_id

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            build_vocab([], 10)

    def test_unknown_maps_to_zero(self):
        v = build_vocab("a a b".split(), 2)
        np.testing.assert_array_equal(v.encode(["a", "zzz"]), [1, 0])


class TestLstmStep:
    def test_zero_everything(self):
        layer = LstmLayer(weight=np.zeros((32, 16)), bias=np.zeros(32), hidden=8)
        h, c = lstm_step(layer, np.zeros((8, 1)), np.zeros((8, 1)), np.zeros((8, 1)))
        assert not h.any() and not c.any()

    def test_cmr_all_false_gates_bias_only(self):
        rng = np.random.default_rng(0)
        cfg = toy_config(layer_specs=[LayerSpec(variant="kp", target_cf=4.0)])
        vocab = build_vocab(toy_tokens(), 50)
        model = build_model(cfg, vocab, rng)
        layer = model.layers[0]
        masks = (np.zeros((32, 1), dtype=bool), np.zeros((32, 1), dtype=bool))
        x = rng.standard_normal((8, 1))
        h0 = rng.standard_normal((8, 1))
        c0 = rng.standard_normal((8, 1))
        h, c = lstm_step(layer, x, h0, c0, cmr=masks)
        # gates reduce to bias; compare against a zero-weight dense layer
        zlayer = LstmLayer(weight=np.zeros((32, 16)), bias=layer.bias, hidden=8)
        h2, c2 = lstm_step(zlayer, x, h0, c0)
        np.testing.assert_allclose(h, h2, atol=1e-12)
        np.testing.assert_allclose(c, c2, atol=1e-12)


class TestClip:
    def test_scales_down(self):
        grads = {"a": np.array([6.0, 8.0])}  # norm 10
        clip_global_norm(grads, 5.0)
        np.testing.assert_allclose(grads["a"], [3.0, 4.0])

    def test_leaves_small_alone(self):
        grads = {"a": np.array([3.0])}
        clip_global_norm(grads, 5.0)
        np.testing.assert_allclose(grads["a"], [3.0])

    def test_post_clip_norm_bounded(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            grads = {k: rng.standard_normal(rng.integers(1, 10)) * 10
                     for k in "abc"}
            scal = {"s": float(rng.standard_normal() * 10)}
            clip_global_norm(grads, 5.0, scal)
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())
                           + sum(v * v for v in scal.values()))
            assert norm <= 5.0 + 1e-9


def collect_all_params(model):
    items = list(model.named_arrays())
    scalars = []
    for i, layer in enumerate(model.layers):
        if layer.doped:
            scalars.append((f"layer{i}.alpha", layer.weight))
            scalars.append((f"layer{i}.beta", layer.weight))
    return items, scalars


class TestEndToEndGradients:
    @pytest.mark.parametrize("variant", ["kp", "lmf", "hmd", "dense"])
    def test_window_gradients_match_fd(self, variant):
        specs = [LayerSpec(variant=variant, target_cf=3.0, doped=variant != "dense"),
                 LayerSpec(variant=variant, target_cf=3.0, doped=variant != "dense")]
        cfg = toy_config(num_layers=2, layer_specs=specs, bptt=4, batch_size=2,
                         hidden_size=8, embed_size=8)
        rng = np.random.default_rng(3)
        vocab = build_vocab([f"w{i}" for i in range(19)], 20)
        model = build_model(cfg, vocab, rng)
        # partially prune the doped layers so dead-mask freezing is exercised
        for layer in model.layers:
            if layer.doped:
                layer.weight.mask = rng.random(layer.weight.mask.shape) > 0.3
                layer.weight.ws *= layer.weight.mask
                layer.weight.alpha = 1.1
                layer.weight.beta = 0.9
        inputs = rng.integers(0, 20, size=(4, 2))
        targets = rng.integers(0, 20, size=(4, 2))
        states = [(rng.standard_normal((8, 2)), rng.standard_normal((8, 2)))
                  for _ in model.layers]

        def loss():
            ce, n_tok, _, _ = run_window(model, cfg, inputs, targets, states,
                                         np.random.default_rng(0), train=False,
                                         collect_grads=False)
            return ce / n_tok

        ce, n_tok, (grads, scalar_grads), _ = run_window(
            model, cfg, inputs, targets, states, np.random.default_rng(0),
            train=False, collect_grads=True)
        eps = 1e-6
        for name, arr in model.named_arrays():
            flat = arr.reshape(-1)
            idx = np.linspace(0, flat.size - 1, min(flat.size, 25)).astype(int)
            for i in idx:
                orig = flat[i]
                h = eps * max(1.0, abs(orig))
                flat[i] = orig + h
                fp = loss()
                flat[i] = orig - h
                fm = loss()
                flat[i] = orig
                numeric = (fp - fm) / (2 * h)
                analytic = grads[name].reshape(-1)[i]
                assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-8), \
                    f"{name}[{i}]"
        for key in scalar_grads:
            li = int(key.split(".")[0][5:])
            attr = key.split(".")[1]
            w = model.layers[li].weight
            orig = getattr(w, attr)
            setattr(w, attr, orig + eps)
            fp = loss()
            setattr(w, attr, orig - eps)
            fm = loss()
            setattr(w, attr, orig)
            assert scalar_grads[key] == pytest.approx((fp - fm) / (2 * eps),
                                                      rel=1e-4, abs=1e-8), key


class TestTrain:
    def test_better_than_uniform(self):
        cfg = toy_config(epochs=1, batch_size=4, bptt=8)
        model, log = train(cfg, toy_tokens(2000, vocab=12))
        assert log["epochs"][0]["train_ppl"] < model.vocab.size

    def test_deterministic_given_seed(self):
        cfg = toy_config(epochs=2, valid_fraction=0.2)
        _, log1 = train(cfg, toy_tokens())
        _, log2 = train(cfg, toy_tokens())
        for e1, e2 in zip(log1["epochs"], log2["epochs"]):
            assert e1["train_ppl"] == e2["train_ppl"]
            assert e1["valid_ppl"] == e2["valid_ppl"]

    def test_sparsity_log_matches_schedule(self):
        cfg = toy_config(epochs=4, batch_size=4, bptt=5, prune_every=3,
                         prune_begin_frac=0.2, prune_end_frac=0.8,
                         layer_specs=[LayerSpec(variant="kp", target_cf=6.0)])
        model, log = train(cfg, toy_tokens(2000))
        from dopedmat.schedules import PruneSchedule
        total = cfg.epochs * log["steps_per_epoch"]
        sched = PruneSchedule(
            s_final=model.layers[0].weight.final_sparsity,
            begin_step=max(1, round(cfg.prune_begin_frac * total)),
            end_step=min(round(cfg.prune_end_frac * total), total - 1),
            prune_every=cfg.prune_every)
        assert log["prune_events"], "expected pruning to happen"
        m, n = model.layers[0].weight.shape
        for ev in log["prune_events"]:
            target = sched.sparsity_at(ev["step"])
            assert ev["target"] == pytest.approx(target, abs=1e-12)
            assert abs(ev["achieved"] - target) <= 1.0 / (m * n)
        assert model.layers[0].weight.sparsity() == pytest.approx(
            sched.s_final, abs=1.0 / (m * n))

    def test_masked_weights_stay_zero(self):
        cfg = toy_config(epochs=3, batch_size=4, bptt=5,
                         cmr_kind="linDec", cmr_p0=0.5,
                         layer_specs=[LayerSpec(variant="kp", target_cf=6.0)])
        model, _ = train(cfg, toy_tokens(1500))
        w = model.layers[0].weight
        assert w.sparsity() > 0.5
        assert not w.ws[~w.mask].any()

    def test_nan_abort(self):
        cfg = toy_config(epochs=1)
        tokens = toy_tokens(800)
        vocab = build_vocab(tokens, cfg.max_vocab)
        model = build_model(cfg, vocab, np.random.default_rng(0))
        model.out_w[0, 0] = np.nan
        with pytest.raises(TrainingDiverged):
            train(cfg, tokens, model=model)

    def test_resume_is_bitwise_identical(self):
        cfg = toy_config(epochs=3, valid_fraction=0.2,
                         layer_specs=[LayerSpec(variant="kp", target_cf=6.0)],
                         cmr_kind="linDec", cmr_p0=0.4, dropout=0.1)
        tokens = toy_tokens(1500)
        model_full, log_full = train(cfg, tokens)
        # run epochs 0..0, snapshot rng, then resume 1..2
        rng = np.random.default_rng(cfg.seed)
        model_a, log_a = train(cfg, tokens, end_epoch=1, rng=rng)
        model_b, log_b = train(cfg, tokens, start_epoch=1, model=model_a,
                               rng=rng, log=log_a)
        for e1, e2 in zip(log_full["epochs"], log_b["epochs"]):
            assert e1["train_ppl"] == e2["train_ppl"]
            assert e1["valid_ppl"] == e2["valid_ppl"]
        for (n1, a1), (n2, a2) in zip(model_full.named_arrays(),
                                      model_b.named_arrays()):
            assert n1 == n2
            np.testing.assert_array_equal(a1, a2)

    def test_bcd_alternates(self):
        # pruning pushed to the very end so it cannot touch ws mid-test
        cfg = toy_config(epochs=2, bcd_enabled=True, bcd_period_epochs=1,
                         prune_begin_frac=0.98, prune_end_frac=1.0,
                         layer_specs=[LayerSpec(variant="kp", target_cf=6.0)])
        tokens = toy_tokens(600)
        rng = np.random.default_rng(cfg.seed)
        # epoch 0 trains the structured term only: ws must not move
        model, log = train(cfg, tokens, end_epoch=1, rng=rng)
        w0 = model.layers[0].weight
        ws_after_e0 = w0.ws.copy()
        factors_after_e0 = [f.copy() for f in w0.factors()]
        assert not log["prune_events"]
        # epoch 1 trains the sparse term only: factors must not move
        train(cfg, tokens, start_epoch=1, model=model, rng=rng, log=log)
        for f0, f1 in zip(factors_after_e0, w0.factors()):
            np.testing.assert_array_equal(f0, f1)
        assert not np.array_equal(ws_after_e0, w0.ws * w0.mask)


class TestEvaluate:
    def test_uniform_model_ppl_near_vocab_size(self):
        cfg = toy_config()
        rng = np.random.default_rng(0)
        tokens = toy_tokens(6000, vocab=30)
        vocab = build_vocab(tokens, 50)
        model = build_model(cfg, vocab, rng)
        model.emb[:] = 0.0
        model.out_w[:] = 0.0
        model.out_b[:] = 0.0
        for layer in model.layers:
            layer.weight[:] = 0.0
        ppl = evaluate_perplexity(model, cfg, vocab.encode(tokens))
        assert ppl == pytest.approx(vocab.size, rel=0.02)

    def test_frozen_csr_path_matches_masked_dense(self):
        cfg = toy_config(epochs=2, layer_specs=[LayerSpec(variant="kp",
                                                          target_cf=6.0)])
        tokens = toy_tokens(1500)
        model, _ = train(cfg, tokens)
        ids = model.vocab.encode(tokens[:400])
        before = evaluate_perplexity(model, cfg, ids)
        freeze_model(model)
        assert model.layers[0].weight.frozen is not None
        after = evaluate_perplexity(model, cfg, ids)
        assert abs(before - after) <= 1e-6

    def test_empty_eval_raises(self):
        cfg = toy_config()
        rng = np.random.default_rng(0)
        vocab = build_vocab(["a", "b"], 10)
        model = build_model(cfg, vocab, rng)
        with pytest.raises(ValueError):
            evaluate_perplexity(model, cfg, np.array([], dtype=np.int64))


class TestMacReport:
    def test_totals_are_sums(self):
        cfg = toy_config(num_layers=2,
                         layer_specs=[LayerSpec(variant="kp", target_cf=6.0),
                                      LayerSpec(variant="dense")])
        rng = np.random.default_rng(0)
        vocab = build_vocab(toy_tokens(), 50)
        model = build_model(cfg, vocab, rng)
        report = model_mac_report(model)
        assert report["totals"]["dense_macs"] == \
            sum(e["dense_macs"] for e in report["layers"])

    def test_kp_only_has_zero_sparse_macs(self):
        cfg = toy_config(layer_specs=[LayerSpec(variant="kp", target_cf=6.0,
                                                doped=False)])
        rng = np.random.default_rng(0)
        vocab = build_vocab(toy_tokens(), 50)
        model = build_model(cfg, vocab, rng)
        report = model_mac_report(model)
        assert report["layers"][0]["sparse_macs"] == 0


def test_batchify_shapes():
    ids = np.arange(23)
    out = batchify(ids, 4)
    assert out.shape == (4, 5)
    with pytest.raises(ValueError):
        batchify(np.arange(3), 4)
