"""Acceptance suite: one test per criterion, each checked at its stated tolerance
and runtime budget. Run with ``pytest tests/test_acceptance.py`` (or execute
this file); the terminal summary prints one PASS/FAIL line per criterion.
"""

import dataclasses
import math
import time

import numpy as np
import pytest
import torch

from semlle.cli import main as cli_main
from semlle.config import desk_config
from semlle.data import overfit_holdout, overfit_suite
from semlle.imaging import psnr
from semlle.network import enhance_any_size
from semlle.objective import edge_loss, pixel_loss, semantic_loss
from semlle.retinex import decompose, recompose
from semlle.sem_attention import SemanticEmbedding, correlation_map, sem_forward
from semlle.text_prior import PromptPair, contrast_from_embeddings, multimodal_loss
from semlle.training import make_backends, train, run_ablation

from test_objective import total_loss_gradient_error
from test_sem_attention import _identity_block, sem_gradient_relative_errors
from test_text_prior import HIGH, LOW, StubBackend


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


@pytest.fixture(scope="module")
def data():
    return overfit_suite()


@pytest.mark.criterion(1, "Retinex round trip on 100 random 32x32 images")
def test_retinex_round_trip():
    with Budget(5):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            x = rng.uniform(size=(32, 32, 3))
            worst = max(worst, float(np.max(np.abs(recompose(decompose(x)) - x))))
        print(f"worst round-trip error {worst:.3e}")
        assert worst <= 2e-4


@pytest.mark.criterion(2, "SEM row sums, hand example and gradient check")
def test_sem_correctness():
    with Budget(30):
        rng = np.random.default_rng(7)
        worst_row = 0.0
        for i in range(200):
            h, w, c = rng.integers(1, 6, size=3)
            torch.manual_seed(i)
            block = SemanticEmbedding(int(c)).double()
            attn = correlation_map(block, rng.normal(size=(h, w, c)), rng.normal(size=(h, w, c)))
            worst_row = max(worst_row, float(np.max(np.abs(attn.sum(-1) - 1))))
        assert worst_row <= 1e-6

        block = _identity_block()
        feats = np.array([[[1.0], [0.0]]])
        attn = correlation_map(block, feats, feats)
        out = sem_forward(block, feats, feats)
        assert np.max(np.abs(attn[0] - [0.7311, 0.2689])) <= 1e-4  # the published 4-digit values
        a = math.e / (math.e + 1)
        assert np.max(np.abs(attn[0] - [a, 1 - a])) <= 1e-6
        assert abs(out[0, 0, 0] - (a * 1.0 + (1 - a) * 0.0 + 1.0)) <= 1e-6

        errors = sem_gradient_relative_errors()
        print(f"max row-sum error {worst_row:.1e}; worst gradient error {max(errors.values()):.2e}")
        assert max(errors.values()) < 1e-4


@pytest.mark.criterion(3, "Loss oracles and multimodal bounds")
def test_loss_oracles():
    with Budget(10):
        assert pixel_loss(np.full((8, 8, 3), 0.5), np.full((8, 8, 3), 0.6)) == pytest.approx(0.01, abs=1e-15)
        gt = np.random.default_rng(0).uniform(size=(8, 8, 3))
        assert edge_loss(gt + 0.1, gt) == pytest.approx(0.0, abs=1e-30)
        kl = semantic_loss(np.array([[[0.5, 0.5]]]), np.array([[[0.25, 0.75]]]))
        assert abs(kl - 0.14384) <= 1e-4

        rng = np.random.default_rng(1)
        values = [contrast_from_embeddings(*rng.normal(size=(3, 512))) for _ in range(1000)]
        assert -2.0 <= min(values) and max(values) <= 2.0

        prompts = PromptPair()
        texts = {prompts.low_prompt: LOW, prompts.high_prompt: HIGH}
        img = np.zeros((8, 8, 3))
        assert multimodal_loss(StubBackend(HIGH, texts), img, prompts) == -1.0
        assert multimodal_loss(StubBackend(LOW, texts), img, prompts) == 1.0


@pytest.mark.criterion(4, "End-to-end gradient of the total loss")
def test_end_to_end_gradient():
    with Budget(60):
        err = total_loss_gradient_error(with_segmentation=True)
        print(f"relative error {err:.2e}")
        assert err < 1e-4


def _train_set_scores(model, seg, data):
    pix, gain = [], []
    for i in range(len(data)):
        low, high = data.load(i)
        out = enhance_any_size(model, low.astype(np.float32), seg)
        pix.append(pixel_loss(out, high))
        gain.append(psnr(out, high) - psnr(low, high))
    return float(np.mean(pix)), float(np.mean(gain))


@pytest.mark.criterion(5, "Overfit convergence on the shipped suite")
def test_overfit_convergence(data):
    with Budget(300):
        cfg = desk_config()
        assert cfg.max_steps <= 500
        seg, vl = make_backends(cfg)
        initial = train(dataclasses.replace(cfg, epochs=0), data, seg_backend=seg, vl_backend=vl)[0]
        pix0, _ = _train_set_scores(initial, seg, data)
        model, records = train(cfg, data, seg_backend=seg, vl_backend=vl)
        pix1, gain = _train_set_scores(model, seg, data)
        print(f"{len(records)} steps: pixel loss {pix0:.5f} -> {pix1:.5f} "
              f"({100 * pix1 / pix0:.1f}% of initial); PSNR gain over inputs {gain:.2f} dB")
        assert len(records) <= 500
        assert pix1 < 0.1 * pix0
        assert gain >= 6.0


@pytest.mark.criterion(6, "Ablation harness produces both tables with exact switches")
def test_ablation_harness(data, tmp_path):
    with Budget(25 * 60):
        result = run_ablation(desk_config(), data, overfit_holdout(), out_dir=tmp_path)
        print(result.render_text())
        assert len(result.breakdown) == 4 and len(result.losses) == 4
        assert all(r.switch_exact for r in result.breakdown + result.losses)
        assert all(math.isfinite(r.psnr) and math.isfinite(r.ssim) for r in result.breakdown + result.losses)
        for name in ("ablation.txt", "breakdown.csv", "losses.csv"):
            assert (tmp_path / name).is_file()


@pytest.mark.criterion(7, "Bitwise-identical checkpoints and enhanced PNGs")
def test_determinism(data, tmp_path):
    with Budget(10 * 60):
        cfg = desk_config()
        for run in ("a", "b"):
            train(cfg, data, out_dir=tmp_path / run)
        ckpt_a = (tmp_path / "a" / "final.safetensors").read_bytes()
        assert ckpt_a == (tmp_path / "b" / "final.safetensors").read_bytes()
        low = str(overfit_holdout().pairs[0][0])
        for run in ("a", "b"):
            assert cli_main(["enhance", "--input", low, "--checkpoint", str(tmp_path / "a" / "final.safetensors"),
                             "--output", str(tmp_path / f"{run}.png")]) == 0
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


@pytest.mark.criterion(8, "Frozen priors are unchanged by training")
def test_frozen_priors(data):
    with Budget(60):
        cfg = desk_config(max_steps=100)
        seg, vl = make_backends(cfg)
        probe = torch.tensor(np.random.default_rng(5).uniform(size=(1, 32, 32, 3)), dtype=torch.float32)

        def outputs():
            with torch.no_grad():
                seg_map, feats = seg(probe)
                return [seg_map.clone(), *(f.clone() for f in feats), vl.embed_image(probe).clone(),
                        vl.embed_text(cfg.prompts.low_prompt).clone(), vl.embed_text(cfg.prompts.high_prompt).clone()]

        before = outputs()
        params_before = [p.clone() for p in list(seg.parameters()) + list(vl.parameters())]
        train(cfg, data, seg_backend=seg, vl_backend=vl)
        after = outputs()
        assert all(torch.equal(a, b) for a, b in zip(before, after))
        assert all(torch.equal(a, b) for a, b in zip(params_before, list(seg.parameters()) + list(vl.parameters())))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
