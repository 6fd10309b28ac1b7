"""Heart pulse reconstruction network.

Per-bin 1-D convolutions with residual blocks extract temporal features,
a single-head graph-attention layer mixes information across range bins,
a strided convolutional encoder-decoder with skip connections forms the
motion latent, and a BiLSTM plus dense head with a sigmoid emits the pulse
waveform amplitude per time step. Channel counts are toy-scale and fully
configurable.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .core import FormatError, Hpw, InvalidInputError, NumericError
from .sigproc import FeatureBlock

CHECKPOINT_MAGIC = "HPRC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HprNetConfig:
    """Architecture hyperparameters; defaults are the toy-scale network."""

    in_channels: int = 3
    extractor_channels: int = 16
    extractor_blocks: int = 2
    kernel_size: int = 7
    gat_dim: int = 32
    encoder_channels: tuple[int, ...] = (32, 64, 64)
    lstm_hidden: int = 64
    head_hidden: int = 128
    leaky_slope: float = 0.2
    conv_activation: str = "relu"  # "relu" | "identity"
    reconstructor: str = "bilstm"  # "bilstm" | "linear"
    head_sigmoid: bool = True
    # Freeze attention at 1/m (skipping the softmax) so the linearized
    # variant is exactly linear in its parameters.
    gat_uniform_attention: bool = False

    def __post_init__(self):
        if min(self.in_channels, self.extractor_channels, self.gat_dim,
               self.lstm_hidden, self.head_hidden) < 1:
            raise InvalidInputError("channel counts must be >= 1")
        if self.kernel_size % 2 != 1:
            raise InvalidInputError("kernel_size must be odd")
        if len(self.encoder_channels) < 1:
            raise InvalidInputError("need at least one encoder stage")
        if self.conv_activation not in ("relu", "identity"):
            raise InvalidInputError(f"unknown activation {self.conv_activation!r}")
        if self.reconstructor not in ("bilstm", "linear"):
            raise InvalidInputError(f"unknown reconstructor {self.reconstructor!r}")

    @property
    def total_stride(self) -> int:
        return 2 ** len(self.encoder_channels)

    def linearized(self) -> "HprNetConfig":
        """Variant with every pointwise nonlinearity bypassed and the LSTM
        replaced by a per-step linear map; used for exact gradient checks."""
        return dataclasses.replace(self, conv_activation="identity",
                                   reconstructor="linear", head_sigmoid=False,
                                   leaky_slope=1.0, gat_uniform_attention=True)


def _activation(kind: str) -> nn.Module:
    return nn.ReLU() if kind == "relu" else nn.Identity()


class ResidualBlock1d(nn.Module):
    """conv-act-conv with an additive shortcut; 1x1 conv when shape changes."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int,
                 activation: str):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(c_in, c_out, kernel, stride=stride, padding=pad)
        self.conv2 = nn.Conv1d(c_out, c_out, kernel, padding=pad)
        self.act = _activation(activation)
        if c_in != c_out or stride != 1:
            self.shortcut = nn.Conv1d(c_in, c_out, 1, stride=stride)
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        return self.act(self.conv2(self.act(self.conv1(x))) + self.shortcut(x))


class TransposedResidualBlock1d(nn.Module):
    """Upsampling mirror of ResidualBlock1d using transposed convolutions."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int,
                 activation: str):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.ConvTranspose1d(c_in, c_out, kernel, stride=stride,
                                        padding=pad, output_padding=stride - 1)
        self.conv2 = nn.Conv1d(c_out, c_out, kernel, padding=pad)
        self.act = _activation(activation)
        self.shortcut = nn.ConvTranspose1d(c_in, c_out, 1, stride=stride,
                                           output_padding=stride - 1)

    def forward(self, x):
        return self.act(self.conv2(self.act(self.conv1(x))) + self.shortcut(x))


class GraphAttention(nn.Module):
    """Single-head attention over range bins, applied at every time step.

    alpha_ij = softmax_j(LeakyReLU(a^T [W h_i || W h_j])) and
    h'_i = LeakyReLU(sum_j alpha_ij W h_j), both with negative slope 0.2.
    """

    def __init__(self, d_in: int, d_out: int, slope: float = 0.2,
                 uniform: bool = False):
        super().__init__()
        self.w = nn.Linear(d_in, d_out, bias=False)
        self.a = nn.Parameter(torch.empty(2 * d_out))
        nn.init.uniform_(self.a, -1.0 / np.sqrt(2 * d_out),
                         1.0 / np.sqrt(2 * d_out))
        self.slope = slope
        self.uniform = uniform

    def attention(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (alpha, Wh) for input h of shape (B, m, T, d_in);
        alpha has shape (B, m, m, T) with rows summing to one over axis 2."""
        wh = self.w(h)
        b, m, t, d_out = wh.shape
        if self.uniform:
            alpha = torch.full((b, m, m, t), 1.0 / m, dtype=wh.dtype,
                               device=wh.device)
            return alpha, wh
        s_i = (wh * self.a[:d_out]).sum(-1)  # (B, m, T)
        s_j = (wh * self.a[d_out:]).sum(-1)
        logits = F.leaky_relu(s_i.unsqueeze(2) + s_j.unsqueeze(1), self.slope)
        return torch.softmax(logits, dim=2), wh

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        alpha, wh = self.attention(h)
        mixed = torch.einsum("bijt,bjtd->bitd", alpha, wh)
        return F.leaky_relu(mixed, self.slope)


def gat_forward(h, layer: GraphAttention) -> torch.Tensor:
    """Apply a GraphAttention layer to one (m, d) timestep of bin features."""
    ht = torch.as_tensor(h, dtype=next(layer.parameters()).dtype)
    if ht.ndim != 2:
        raise InvalidInputError("gat_forward expects an (m, d) matrix")
    return layer(ht.unsqueeze(0).unsqueeze(2))[0, :, 0, :]


class HprNet(nn.Module):
    """Extractor -> GAT -> encoder-decoder -> reconstructor -> dense head."""

    def __init__(self, config: HprNetConfig = HprNetConfig()):
        super().__init__()
        self.config = config
        c = config.extractor_channels
        k = config.kernel_size
        act = config.conv_activation
        stem = [nn.Conv1d(config.in_channels, c, k, padding=k // 2),
                _activation(act)]
        stem += [ResidualBlock1d(c, c, k, 1, act)
                 for _ in range(config.extractor_blocks)]
        self.extractor = nn.Sequential(*stem)
        self.gat = GraphAttention(c, config.gat_dim, config.leaky_slope,
                                  uniform=config.gat_uniform_attention)

        chans = (config.gat_dim,) + config.encoder_channels
        self.encoder = nn.ModuleList(
            ResidualBlock1d(chans[i], chans[i + 1], k, 2, act)
            for i in range(len(config.encoder_channels)))
        self.decoder = nn.ModuleList(
            TransposedResidualBlock1d(chans[i + 1], chans[i], k, 2, act)
            for i in reversed(range(len(config.encoder_channels))))

        if config.reconstructor == "bilstm":
            self.reconstructor = nn.LSTM(config.gat_dim, config.lstm_hidden,
                                         batch_first=True, bidirectional=True)
        else:
            self.reconstructor = nn.Linear(config.gat_dim,
                                           2 * config.lstm_hidden)
        self.head = nn.Sequential(
            nn.Linear(2 * config.lstm_hidden, config.head_hidden),
            _activation(act),
            nn.Linear(config.head_hidden, 1),
        )
        if config.head_sigmoid:
            # Start the sigmoid near the pulse train's duty cycle instead of
            # 0.5; cuts a long mean-calibration plateau out of training.
            nn.init.constant_(self.head[2].bias, -1.1)
        # Wiring-check hook: setting this to 0 detaches the skip paths.
        self.skip_gain = 1.0

    @staticmethod
    def _check(x: torch.Tensor, stage: str) -> torch.Tensor:
        if not torch.isfinite(x).all():
            raise NumericError(f"non-finite values after {stage}")
        return x

    def embed_bins(self, x: torch.Tensor) -> torch.Tensor:
        """Per-bin temporal embeddings: (B, m, T, 3) -> (B, m, T, c)."""
        b, m, t, _ = x.shape
        flat = x.permute(0, 1, 3, 2).reshape(b * m, self.config.in_channels, t)
        emb = self._check(self.extractor(flat), "extractor")
        return emb.reshape(b, m, -1, t).permute(0, 1, 3, 2)

    def code(self, seq: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Encoder-decoder pass on (B, C, T); returns (latent, decoded).

        T is padded by replication up to the total stride and the decoded
        output cropped back, so output length always equals input length.
        Skip connections add each encoder stage's input to the matching
        decoder stage's output.
        """
        t = seq.shape[-1]
        pad = (-t) % self.config.total_stride
        if pad:
            seq = F.pad(seq, (0, pad), mode="replicate")
        skips = [seq]
        h = seq
        for i, block in enumerate(self.encoder):
            h = self._check(block(h), f"encoder[{i}]")
            skips.append(h)
        latent = h
        for i, block in enumerate(self.decoder):
            h = self._check(block(h), f"decoder[{i}]")
            h = h + self.skip_gain * skips[len(self.decoder) - 1 - i]
        return latent, h[:, :, :t]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Map (B, m, T, 3) feature blocks to (B, T) waveforms in (0, 1)."""
        if x.ndim != 4 or x.shape[-1] != self.config.in_channels:
            raise InvalidInputError(
                f"expected (B, m, T, {self.config.in_channels}) input, "
                f"got {tuple(x.shape)}")
        emb = self.embed_bins(x)
        mixed = self._check(self.gat(emb), "gat")
        seq = mixed.mean(dim=1).permute(0, 2, 1)  # (B, gat_dim, T)
        _, h = self.code(seq)
        h = h.permute(0, 2, 1)  # (B, T, gat_dim)

        if isinstance(self.reconstructor, nn.LSTM):
            h, _ = self.reconstructor(h)
        else:
            h = self.reconstructor(h)
        self._check(h, "reconstructor")
        out = self.head(h).squeeze(-1)
        if self.config.head_sigmoid:
            out = torch.sigmoid(out)
        return self._check(out, "head")


def extractor_forward(features: FeatureBlock, model: HprNet) -> torch.Tensor:
    """Per-bin embeddings of one recording: (num_bins, num_steps, c)."""
    x = torch.as_tensor(features.channels,
                        dtype=next(model.parameters()).dtype)
    return model.embed_bins(x.unsqueeze(0))[0]


def coder_forward(x: torch.Tensor,
                  model: HprNet) -> tuple[torch.Tensor, torch.Tensor]:
    """Encoder-decoder latent and reconstruction for a (B, C, T) sequence."""
    return model.code(x)


def reconstruct(features: FeatureBlock, model: HprNet) -> Hpw:
    """Run the network on one recording's feature block."""
    model.eval()
    with torch.no_grad():
        x = torch.as_tensor(features.channels,
                            dtype=next(model.parameters()).dtype)
        y = model(x.unsqueeze(0))[0]
    return Hpw(samples=y.cpu().numpy().astype(np.float64), rate=features.rate)


def save_checkpoint(model: HprNet, path) -> None:
    """Single-file checkpoint: JSON manifest line + float32 payload."""
    state = model.state_dict()
    names = sorted(state.keys())
    manifest = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(model.config),
        "tensors": [{"name": n, "shape": list(state[n].shape)} for n in names],
    }
    payload = b"".join(
        state[n].detach().cpu().numpy().astype("<f4").tobytes() for n in names)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(json.dumps(manifest).encode() + b"\n" + payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> HprNet:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing manifest newline", offset=len(raw))
    try:
        manifest = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad manifest: {exc}", offset=0) from exc
    if manifest.get("magic") != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic", offset=0)
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"{path}: unsupported version {manifest.get('version')!r}", offset=0)
    config = manifest["config"]
    config["encoder_channels"] = tuple(config["encoder_channels"])
    model = HprNet(HprNetConfig(**config))
    state = {}
    offset = nl + 1
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 4
        if end > len(raw):
            raise FormatError(f"{path}: payload truncated at {entry['name']}",
                              offset=len(raw))
        arr = np.frombuffer(raw, dtype="<f4", count=count,
                            offset=offset).reshape(shape)
        state[entry["name"]] = torch.from_numpy(arr.copy())
        offset = end
    if offset != len(raw):
        raise FormatError(f"{path}: trailing bytes after payload", offset=offset)
    model.load_state_dict(state)
    return model
