"""Adam training loop, evaluation and the break-down / sub-loss ablation harness."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import AblationSwitches, TrainConfig
from .data import PairedDataset
from .imaging import psnr, ssim
from .network import Enhancer, build_model, enhance_any_size, run_model
from .objective import LOSS_NAMES, LossBreakdown, LossSwitches, total_loss
from .semantic_prior import SegmentationBackend, load_segmentation_backend
from .text_prior import VisionLanguageBackend, load_vl_backend

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step, component, value):
        super().__init__(f"step {step}: loss component {component!r} is non-finite ({value})")
        self.component = component


@dataclass(frozen=True)
class TrainLogRecord:
    step: int
    pix: float
    edge: float
    sem: float
    mul: float
    total: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclass
class TrainState:
    model: Enhancer
    optimizer: torch.optim.Optimizer
    config: TrainConfig
    seg_backend: SegmentationBackend
    vl_backend: VisionLanguageBackend | None
    step: int = 0
    started: float = dataclasses.field(default_factory=time.perf_counter)


def make_backends(config: TrainConfig):
    seg = load_segmentation_backend(config.segmentation.weights, seed=config.segmentation.seed,
                                    num_classes=config.segmentation.num_classes, num_scales=config.net.scales)
    vl = load_vl_backend(config.vision_language.image_weights, config.vision_language.text_weights,
                         seed=config.vision_language.seed, embed_dim=config.vision_language.embed_dim)
    return seg, vl


def init_state(config: TrainConfig, seg_backend=None, vl_backend=None) -> TrainState:
    if seg_backend is None or vl_backend is None:
        seg, vl = make_backends(config)
        seg_backend = seg_backend or seg
        vl_backend = vl_backend or vl
    model = build_model(config.effective_net(), seg_backend, seed=config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr, betas=config.betas)
    return TrainState(model, opt, config, seg_backend, vl_backend)


def compute_losses(model: Enhancer, low, high, config: TrainConfig, seg_backend, vl_backend,
                   switches: LossSwitches | None = None) -> LossBreakdown:
    """Forward a batch and evaluate the configured objective."""
    switches = config.effective_losses() if switches is None else switches
    out = run_model(model, low, seg_backend)
    seg_out = seg_gt = None
    if switches.sem:
        seg_out = seg_backend(out)[0]
        with torch.no_grad():
            seg_gt = seg_backend(high)[0]
    return total_loss(out, high, seg_out, seg_gt, vl_backend, config.prompts, config.weights, switches)


def train_step(state: TrainState, batch):
    """One Adam update on a ``(low, high)`` batch; returns ``(state, record)``."""
    low, high = (torch.as_tensor(np.asarray(b)) for b in batch)
    state.model.train()
    losses = compute_losses(state.model, low, high, state.config, state.seg_backend, state.vl_backend)
    for name in LOSS_NAMES + ("total",):
        value = getattr(losses, name)
        if not torch.isfinite(value):
            raise NonFiniteLossError(state.step, name, float(value.detach()))
    state.optimizer.zero_grad(set_to_none=True)
    losses.total.backward()
    state.optimizer.step()
    vals = losses.to_dict()
    record = TrainLogRecord(step=state.step, seconds=time.perf_counter() - state.started, **vals)
    state.step += 1
    return state, record


def train(config: TrainConfig, dataset: PairedDataset, out_dir=None, seg_backend=None, vl_backend=None,
          callback=None):
    """Run ``epochs * ceil(N / batch_size)`` steps (capped by ``max_steps``).

    Data order and crops are seeded per epoch from ``config.seed``. With
    ``out_dir`` the log is written to ``train_log.jsonl`` and checkpoints to
    ``final.safetensors`` (plus ``epoch_XXXX.safetensors`` every
    ``checkpoint_every`` epochs). Returns ``(model, records)``.
    """
    state = init_state(config, seg_backend, vl_backend)
    records = []
    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "train_log.jsonl", "w")
    n = len(dataset)
    steps_per_epoch = math.ceil(n / config.batch_size)
    try:
        for epoch in range(config.epochs):
            if config.max_steps is not None and state.step >= config.max_steps:
                break
            rng = np.random.default_rng([config.seed, epoch])
            order = rng.permutation(n)
            for k in range(steps_per_epoch):
                if config.max_steps is not None and state.step >= config.max_steps:
                    break
                idx = order[k * config.batch_size:(k + 1) * config.batch_size]
                batch = dataset.batch(idx, rng, flip=config.flip)
                state, record = train_step(state, batch)
                records.append(record)
                if log_fh is not None:
                    log_fh.write(record.to_json() + "\n")
                if callback is not None:
                    callback(state, record)
            if out_dir is not None and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                save_checkpoint(out_dir / f"epoch_{epoch + 1:04d}.safetensors", state.model,
                                _backend_config(state.seg_backend))
    finally:
        if log_fh is not None:
            log_fh.close()
    if out_dir is not None:
        save_checkpoint(out_dir / "final.safetensors", state.model, _backend_config(state.seg_backend))
    return state.model, records


def _backend_config(backend) -> dict:
    return backend.config() if hasattr(backend, "config") else {}


def evaluate(model: Enhancer, dataset: PairedDataset, seg_backend=None):
    """Per-image ``(name, psnr, ssim)`` rows on full images (padded internally)."""
    rows = []
    model.eval()
    for i, name in enumerate(dataset.names):
        low, high = dataset.load(i)
        out = enhance_any_size(model, low, seg_backend)
        rows.append((name, psnr(out, high), ssim(out, high)))
    return rows


def metrics_csv(rows) -> str:
    """CSV with columns name, psnr, ssim and a trailing ``mean`` row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "psnr", "ssim"])
    for name, p, s in rows:
        writer.writerow([name, f"{p:.4f}", f"{s:.6f}"])
    writer.writerow(["mean", f"{np.mean([r[1] for r in rows]):.4f}", f"{np.mean([r[2] for r in rows]):.6f}"])
    return buf.getvalue()


# -- ablation harness -------------------------------------------------------

BREAKDOWN_VARIANTS = (
    ("Baseline", AblationSwitches(image_prior=False, text_prior=False, c2f=False)),
    ("Variant 1", AblationSwitches(image_prior=True, text_prior=False, c2f=False)),
    ("Variant 2", AblationSwitches(image_prior=True, text_prior=True, c2f=False)),
    ("Variant 3", AblationSwitches(image_prior=True, text_prior=True, c2f=True)),
)

LOSS_STACKS = (
    LossSwitches(pix=True, edge=False, sem=False, mul=False),
    LossSwitches(pix=True, edge=True, sem=False, mul=False),
    LossSwitches(pix=True, edge=True, sem=True, mul=False),
    LossSwitches(pix=True, edge=True, sem=True, mul=True),
)


@dataclass
class AblationRow:
    label: str
    flags: dict
    psnr: float
    ssim: float
    switch_exact: bool


@dataclass
class AblationResult:
    breakdown: list
    losses: list

    def render_text(self) -> str:
        return "\n\n".join([
            _render("Break-down ablation", ["Scheme", "Image Semantics", "Text Semantics", "C2F"], self.breakdown),
            _render("Sub-loss ablation", ["Pixel loss", "Edge loss", "Segmentation loss", "Multimodal loss"],
                    self.losses, show_label=False),
        ])

    def to_csv(self, table: str) -> str:
        rows = self.breakdown if table == "breakdown" else self.losses
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        flag_names = list(rows[0].flags)
        writer.writerow(["scheme", *flag_names, "psnr", "ssim", "switch_exact"])
        for r in rows:
            writer.writerow([r.label, *(int(r.flags[f]) for f in flag_names), f"{r.psnr:.4f}", f"{r.ssim:.6f}",
                             int(r.switch_exact)])
        return buf.getvalue()


def _render(title, headers, rows, show_label=True):
    cols = headers + ["PSNR", "SSIM"]
    body = []
    for r in rows:
        marks = ["yes" if v else "no" for v in r.flags.values()]
        body.append(([r.label] if show_label else []) + marks + [f"{r.psnr:.2f}", f"{r.ssim:.3f}"])
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]

    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    return "\n".join([title, line(cols), "  ".join("-" * w for w in widths)] + [line(b) for b in body])


def check_switch_exactness(model, dataset: PairedDataset, config: TrainConfig, seg_backend, vl_backend) -> bool:
    """Disabled sub-losses must report exactly zero and the total must equal the
    weighted sum of the enabled ones."""
    low, high = (torch.as_tensor(b) for b in dataset.batch(range(min(len(dataset), config.batch_size))))
    switches = config.effective_losses()
    with torch.no_grad():
        br = compute_losses(model, low, high, config, seg_backend, vl_backend)
    ok = True
    expected = 0.0
    for name in LOSS_NAMES:
        value = float(getattr(br, name))
        if not getattr(switches, name):
            ok &= value == 0.0
        else:
            expected += getattr(config.weights, name) * value
    ok &= abs(float(br.total) - expected) <= 1e-6 * max(1.0, abs(expected))
    return bool(ok)


def run_ablation(config: TrainConfig, dataset: PairedDataset, holdout: PairedDataset | None = None,
                 out_dir=None) -> AblationResult:
    """Train every break-down variant and sub-loss stack and score them on ``holdout``.

    Sub-loss stacks use the full model (all priors, coarse-to-fine). Identical
    configurations are trained once. Without ``holdout`` the training set is
    scored.
    """
    holdout = dataset if holdout is None else holdout
    seg, vl = make_backends(config)
    cache = {}

    def run(cfg: TrainConfig):
        key = (cfg.ablation, cfg.effective_losses())
        if key not in cache:
            model, _ = train(cfg, dataset, seg_backend=seg, vl_backend=vl)
            rows = evaluate(model, holdout, seg)
            exact = check_switch_exactness(model, dataset, cfg, seg, vl)
            cache[key] = (float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows])), exact)
            log.info("ablation %s -> psnr %.2f ssim %.3f", key, *cache[key][:2])
        return cache[key]

    breakdown = []
    for label, switches in BREAKDOWN_VARIANTS:
        p, s, exact = run(dataclasses.replace(config, ablation=switches))
        breakdown.append(AblationRow(label, {"image": switches.image_prior, "text": switches.text_prior,
                                             "c2f": switches.c2f}, p, s, exact))
    losses = []
    for i, stack in enumerate(LOSS_STACKS):
        p, s, exact = run(dataclasses.replace(config, ablation=AblationSwitches(), losses=stack))
        losses.append(AblationRow(f"stack {i + 1}", {"pix": stack.pix, "edge": stack.edge, "sem": stack.sem,
                                                     "mul": stack.mul}, p, s, exact))
    result = AblationResult(breakdown, losses)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation.txt").write_text(result.render_text() + "\n")
        (out_dir / "breakdown.csv").write_text(result.to_csv("breakdown"))
        (out_dir / "losses.csv").write_text(result.to_csv("losses"))
    return result
