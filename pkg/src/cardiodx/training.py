"""Training loop and finite-difference gradient verification.

Recordings are normalized per recording upstream, then cut into overlapping
fixed-length windows here; optimization is Adam on mean squared error
against the Gaussian pulse-train target. Everything is deterministic given
the config seed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
from torch.nn import functional as F

from .core import Hpw, InvalidInputError, NumericError, derive_seed
from .hprnet import HprNet, HprNetConfig
from .sigproc import FeatureBlock


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 16
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    window_s: float = 8.0  # training window length
    overlap: float = 0.5  # fraction of window shared by neighbors
    # "cosine" decays the initial rate to a tenth over the run; helps the
    # nets off the constant-output plateau and sharpens late epochs.
    lr_schedule: str = "cosine"
    # Intra-op threads while training. Toy-scale ops lose more to thread
    # sync than they gain, and one thread gives the strongest determinism.
    torch_threads: int | None = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0 or self.eps <= 0:
            raise InvalidInputError("bad optimizer hyperparameters")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise InvalidInputError("betas must lie in (0, 1)")
        if self.window_s <= 0 or not 0.0 <= self.overlap < 1.0:
            raise InvalidInputError("bad windowing parameters")
        if self.lr_schedule not in ("cosine", "constant"):
            raise InvalidInputError(f"unknown schedule {self.lr_schedule!r}")
        if self.torch_threads is not None and self.torch_threads < 1:
            raise InvalidInputError("torch_threads must be >= 1 or None")


def make_windows(features: FeatureBlock, target: Hpw, window_s: float,
                 overlap: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cut one recording into overlapping (features, target) windows."""
    if features.num_steps != target.samples.size:
        raise InvalidInputError("feature block and target length differ")
    n = int(round(window_s * features.rate))
    t = features.num_steps
    if t <= n:
        return [(features.channels, target.samples)]
    step = max(1, int(round(n * (1.0 - overlap))))
    starts = list(range(0, t - n + 1, step))
    if starts[-1] != t - n:
        starts.append(t - n)  # final partial stride still covers the tail
    return [(features.channels[:, s:s + n, :], target.samples[s:s + n])
            for s in starts]


def train(dataset: list[tuple[FeatureBlock, Hpw]], cfg: TrainConfig,
          net_config: HprNetConfig = HprNetConfig(),
          val_dataset: list[tuple[FeatureBlock, Hpw]] | None = None,
          ) -> tuple[HprNet, list[dict]]:
    """Train a network on (features, target) pairs.

    Returns the model and a per-epoch history of training (and validation)
    MSE. Windows of identical shape are batched together; batch order and
    shuffling derive from cfg.seed only. Raises NumericError if the loss
    diverges.
    """
    if not dataset:
        raise InvalidInputError("dataset must not be empty")
    windows = []
    for features, target in dataset:
        windows.extend(make_windows(features, target, cfg.window_s, cfg.overlap))
    val_windows = []
    for features, target in val_dataset or []:
        val_windows.extend(make_windows(features, target, cfg.window_s,
                                        cfg.overlap))

    old_threads = torch.get_num_threads()
    if cfg.torch_threads is not None:
        torch.set_num_threads(cfg.torch_threads)
    try:
        return _train_loop(windows, val_windows, cfg, net_config)
    finally:
        torch.set_num_threads(old_threads)


def _train_loop(windows, val_windows, cfg: TrainConfig,
                net_config: HprNetConfig) -> tuple[HprNet, list[dict]]:
    torch.manual_seed(derive_seed(cfg.seed, "init"))
    model = HprNet(net_config)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                           betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    scheduler = None
    if cfg.lr_schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            opt, T_max=cfg.epochs, eta_min=0.1 * cfg.learning_rate)

    tensors = [(torch.as_tensor(x, dtype=torch.float32),
                torch.as_tensor(y, dtype=torch.float32)) for x, y in windows]
    # Only same-shape windows can share a batch.
    buckets: dict[tuple, list[int]] = {}
    for i, (x, _) in enumerate(tensors):
        buckets.setdefault(tuple(x.shape), []).append(i)

    history: list[dict] = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(derive_seed(cfg.seed, "epoch", epoch))
        model.train()
        total, count = 0.0, 0
        for key in sorted(buckets):
            order = rng.permutation(buckets[key])
            for s in range(0, len(order), cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                xb = torch.stack([tensors[i][0] for i in idx])
                yb = torch.stack([tensors[i][1] for i in idx])
                opt.zero_grad()
                try:
                    loss = F.mse_loss(model(xb), yb)
                except NumericError as exc:
                    raise NumericError(f"{exc} (epoch {epoch})") from exc
                if not torch.isfinite(loss):
                    raise NumericError(f"loss diverged at epoch {epoch}")
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(idx)
                count += len(idx)
        if scheduler is not None:
            scheduler.step()
        entry = {"epoch": epoch, "train_mse": total / count}
        if val_windows:
            entry["val_mse"] = evaluate_mse(model, val_windows)
        history.append(entry)
    return model, history


def evaluate_mse(model: HprNet, windows: list[tuple]) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for x, y in windows:
            xt = torch.as_tensor(x, dtype=torch.float32).unsqueeze(0)
            yt = torch.as_tensor(y, dtype=torch.float32)
            total += float(F.mse_loss(model(xt)[0], yt)) * yt.numel()
            count += yt.numel()
    return total / count


def _block_name(param_name: str) -> str:
    return param_name.split(".", 1)[0]


def grad_check(model: HprNet, sample: tuple, epsilon: float = 1e-4,
               n_per_block: int = 200, corrupt: str | None = None,
               seed: int = 0) -> dict:
    """Compare autograd gradients to central finite differences.

    ``sample`` is one (features, target) pair, as arrays or tensors. For
    every block class the check perturbs up to ``n_per_block`` randomly
    chosen parameters. ``corrupt`` names a block whose analytic gradients
    are deliberately scaled, as a fault-injection negative control.
    Returns per-block and overall maximum relative errors.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise InvalidInputError("epsilon must lie in [1e-6, 1e-3]")
    x, y = sample
    x = torch.as_tensor(np.asarray(x), dtype=torch.float64)
    y = torch.as_tensor(np.asarray(y), dtype=torch.float64)
    if x.ndim == 3:
        x = x.unsqueeze(0)
    if y.ndim == 1:
        y = y.unsqueeze(0)
    model = copy.deepcopy(model).double()
    model.eval()

    hooks = []
    if corrupt is not None:
        names = {_block_name(n) for n, _ in model.named_parameters()}
        if corrupt not in names:
            raise InvalidInputError(f"no block named {corrupt!r}")
        for name, param in model.named_parameters():
            if _block_name(name) == corrupt:
                hooks.append(param.register_hook(lambda g: 1.5 * g))

    loss = F.mse_loss(model(x), y)
    model.zero_grad()
    loss.backward()
    # Parameters unused by the forward pass (e.g. the attention vector in
    # uniform-attention mode) legitimately have zero gradient.
    analytic = {n: (p.grad.detach().clone() if p.grad is not None
                    else torch.zeros_like(p))
                for n, p in model.named_parameters()}
    for h in hooks:
        h.remove()

    params = dict(model.named_parameters())
    blocks: dict[str, list[str]] = {}
    for name in params:
        blocks.setdefault(_block_name(name), []).append(name)

    rng = np.random.default_rng(derive_seed(seed, "gradcheck"))
    per_block: dict[str, float] = {}
    with torch.no_grad():
        for block, names in sorted(blocks.items()):
            sizes = [params[n].numel() for n in names]
            total = sum(sizes)
            chosen = rng.choice(total, size=min(n_per_block, total),
                                replace=False)
            worst = 0.0
            for flat_idx in np.sort(chosen):
                k = 0
                while flat_idx >= sizes[k]:
                    flat_idx -= sizes[k]
                    k += 1
                p = params[names[k]].view(-1)
                orig = float(p[flat_idx])
                p[flat_idx] = orig + epsilon
                up = float(F.mse_loss(model(x), y))
                p[flat_idx] = orig - epsilon
                down = float(F.mse_loss(model(x), y))
                p[flat_idx] = orig
                numeric = (up - down) / (2.0 * epsilon)
                a = float(analytic[names[k]].view(-1)[flat_idx])
                rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
                worst = max(worst, rel)
            per_block[block] = worst
    return {"per_block": per_block,
            "max_rel_error": max(per_block.values()),
            "epsilon": epsilon,
            "corrupt": corrupt}
