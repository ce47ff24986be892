"""Paired toy data domains with closed-form structure.

Two families, both cheap enough that every downstream operation has an
independent oracle:

* Isotropic Gaussian mixtures in R^d.  Their density, score, and exact
  forward-noised marginal are all closed-form.
* Stationary Gaussian random textures on an HxW grid, defined by
  per-frequency-mode variances.  The source member of a texture pair
  carries only low-frequency power (smooth blobs), the target only a
  high-frequency oriented band (fine stripes), so spectral statistics
  separate the two domains sharply.

Samples are plain float64 numpy arrays: shape (d,) for points and
(H, W) for images, with image values normalized to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .rng import domain_rng
from .schedule import NoiseSchedule
from .softlabel import radial_frequency_grid

# Pixel standard deviation for texture samples; small enough that the
# [-1, 1] clip almost never engages (4 sigma).
_TEXTURE_PIXEL_STD = 0.25


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic Gaussian mixture: weights (K,), means (K, d), variances (K,)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.asarray(self.variances, dtype=np.float64)
        if w.ndim != 1 or m.ndim != 2 or v.ndim != 1:
            raise ValueError("weights and variances must be 1-D, means 2-D")
        if not (len(w) == len(m) == len(v)):
            raise ValueError("component counts disagree")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1 within 1e-12")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        for name, arr in (("weights", w), ("means", m), ("variances", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return self.means.shape[1]


def gmm_sample(mix: GaussianMixture, count: int, seed: int) -> np.ndarray:
    """count i.i.d. draws, shape (count, d); deterministic given seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = domain_rng(seed)
    comps = rng.choice(len(mix.weights), size=count, p=mix.weights)
    noise = rng.standard_normal((count, mix.dimension))
    return mix.means[comps] + np.sqrt(mix.variances[comps])[:, None] * noise


def _log_components(mix: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Per-component log(w_k N_k(x)) for x of shape (..., d)."""
    d = mix.dimension
    if x.shape[-1] != d:
        raise ValueError(f"point dimension {x.shape[-1]} != mixture dimension {d}")
    sq = np.sum((x[..., None, :] - mix.means) ** 2, axis=-1)
    return (
        np.log(mix.weights)
        - 0.5 * d * np.log(2.0 * np.pi * mix.variances)
        - 0.5 * sq / mix.variances
    )


def gmm_log_density(mix: GaussianMixture, x: np.ndarray):
    """Log mixture density via a stable log-sum-exp.

    x may be a single point (d,) -> float, or a batch (..., d) -> (...,).
    """
    x = np.asarray(x, dtype=np.float64)
    out = logsumexp(_log_components(mix, x), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def gmm_score(mix: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Gradient of the log density: responsibility-weighted component pulls.

    Broadcasts over leading axes of x like gmm_log_density.
    """
    x = np.asarray(x, dtype=np.float64)
    log_comp = _log_components(mix, x)
    resp = np.exp(log_comp - logsumexp(log_comp, axis=-1, keepdims=True))
    pulls = (mix.means - x[..., None, :]) / mix.variances[:, None]
    return np.sum(resp[..., None] * pulls, axis=-2)


def noised_mixture(mix: GaussianMixture, schedule: NoiseSchedule, t: int) -> GaussianMixture:
    """Exact marginal of x_t when x_0 is mixture-distributed.

    Means scale by sqrt(alpha_bar_t); each component variance maps to
    alpha_bar_t * var + (1 - alpha_bar_t); weights are unchanged.
    """
    if not 1 <= t <= schedule.steps_T:
        raise ValueError(f"step {t} outside [1, {schedule.steps_T}]")
    ab = schedule.alpha_bar(t)
    return _noised_mixture_ab(mix, ab)


def _noised_mixture_ab(mix: GaussianMixture, alpha_bar: float) -> GaussianMixture:
    return GaussianMixture(
        weights=mix.weights.copy(),
        means=np.sqrt(alpha_bar) * mix.means,
        variances=alpha_bar * mix.variances + (1.0 - alpha_bar),
    )


# ---------------------------------------------------------------------------
# Texture domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralTexture:
    """Stationary Gaussian texture with known per-mode variances.

    ``mode_variances`` holds the eigenvalues of the (circulant) pixel
    covariance on the full fft2 grid under the unitary transform
    convention, so a sample is white noise filtered by
    sqrt(mode_variances).  Samples are clipped to [-1, 1]; the pixel
    standard deviation is kept small enough that clipping is a
    negligible-mass tail event.
    """

    name: str
    size: int
    mode_variances: np.ndarray  # (size, size), symmetric under negation

    def __post_init__(self):
        mv = np.asarray(self.mode_variances, dtype=np.float64)
        if mv.shape != (self.size, self.size):
            raise ValueError("mode_variances must be (size, size)")
        if np.any(mv <= 0):
            raise ValueError("mode variances must be positive")
        mv.setflags(write=False)
        object.__setattr__(self, "mode_variances", mv)

    def sample(self, count: int, seed: int) -> np.ndarray:
        """count fields of shape (size, size) in [-1, 1]; seeded."""
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = domain_rng(seed)
        white = rng.standard_normal((count, self.size, self.size))
        spectrum = np.fft.fft2(white, norm="ortho")
        spectrum *= np.sqrt(self.mode_variances)[None, :, :]
        fields = np.fft.ifft2(spectrum, norm="ortho").real
        return np.clip(fields, -1.0, 1.0)


@dataclass(frozen=True)
class DomainPair:
    """Named source/target domains producing fields of one shared shape."""

    name: str
    source: GaussianMixture | SpectralTexture
    target: GaussianMixture | SpectralTexture
    shape: tuple[int, ...]

    def __post_init__(self):
        for member in (self.source, self.target):
            got = (
                (member.dimension,)
                if isinstance(member, GaussianMixture)
                else (member.size, member.size)
            )
            if got != tuple(self.shape):
                raise ValueError(f"domain shape {got} != pair shape {self.shape}")


def sample_domain(domain, count: int, seed: int) -> np.ndarray:
    """Uniform sampling entry point for either domain family."""
    if isinstance(domain, GaussianMixture):
        return gmm_sample(domain, count, seed)
    return domain.sample(count, seed)


def default_gmm_pair() -> DomainPair:
    """Desk-scale default: two 3-component planar mixtures with disjoint means.

    Component variances sit near the latent's unit variance, which keeps
    the probability-flow drift mild enough for accurate low-order
    integration while the domains stay clearly multimodal and disjoint.
    """
    var = np.array([0.9, 0.9, 0.9])
    w = np.array([1 / 3, 1 / 3, 1 / 3])
    a = GaussianMixture(w, np.array([[-3.6, 0.0], [-2.4, 1.2], [-2.4, -1.2]]), var)
    b = GaussianMixture(w, np.array([[3.6, 0.0], [2.4, 1.2], [2.4, -1.2]]), var)
    return DomainPair(name="gmm-default", source=a, target=b, shape=(2,))


def _band_profile(kind: str, size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode variance maps (source, target) for a texture pair."""
    if kind != "bandsplit":
        raise ValueError(f"unsupported texture pair kind: {kind!r}")

    radius = radial_frequency_grid((size, size))
    fu = np.fft.fftfreq(size)[:, None]
    fv = np.fft.fftfreq(size)[None, :]
    # Both profiles are even under frequency negation (radius trivially,
    # sin^2 of the angle because negation shifts it by pi), so the implied
    # pixel covariance is exactly real.
    angle = np.arctan2(fu + 0.0 * fv, fv + 0.0 * fu)

    theta = domain_rng(seed).uniform(0.0, np.pi)
    # Source: smooth isotropic blobs, power confined well below the
    # default 0.25-Nyquist high-pass cutoff.
    low = np.exp(-((radius / 0.10) ** 2))
    # Target: oriented annulus at 0.55 Nyquist -> fine stripes.
    annulus = np.exp(-(((radius - 0.55) / 0.08) ** 2))
    orientation = np.exp(-((np.sin(angle - theta) / 0.35) ** 2))
    high = annulus * (0.15 + 0.85 * orientation)

    out = []
    for profile in (low, high):
        profile = profile + 1e-6 * profile.max()
        # Scale to the target pixel variance (the per-pixel variance is the
        # mean of the mode variances under the unitary FFT).
        profile = profile * (_TEXTURE_PIXEL_STD**2 / profile.mean())
        out.append(profile)
    return out[0], out[1]


def make_texture_pair(kind: str, size: int, seed: int) -> DomainPair:
    """Frequency-separated texture pair; deterministic in (kind, size, seed)."""
    if size < 16 or size & (size - 1) != 0:
        raise ValueError("size must be a power of two >= 16")
    low, high = _band_profile(kind, size, seed)
    src = SpectralTexture(name=f"{kind}-low-{size}", size=size, mode_variances=low)
    tgt = SpectralTexture(name=f"{kind}-high-{size}", size=size, mode_variances=high)
    return DomainPair(name=f"texture-{kind}-{size}", source=src, target=tgt, shape=(size, size))


# ---------------------------------------------------------------------------
# PGM sample I/O
# ---------------------------------------------------------------------------


def save_pgm(x: np.ndarray, path) -> None:
    """Write a 2-D field in [-1, 1] as binary PGM (P5, maxval 255).

    The linear map -1 -> 0, +1 -> 255 rounds half up.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"PGM output needs a 2-D field, got shape {x.shape}")
    h, w = x.shape
    if h < 1 or w < 1 or h > 65535 or w > 65535:
        raise ValueError(f"PGM dimensions out of range: {h}x{w}")
    if np.any(x < -1.0) or np.any(x > 1.0):
        raise ValueError("pixel values must lie in [-1, 1]")
    quantized = np.floor((x + 1.0) * 127.5 + 0.5)
    data = np.clip(quantized, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM back into a float64 field in [-1, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise ValueError("not a binary PGM (missing P5 magic)")
    # Header: magic, width, height, maxval, separated by whitespace with
    # optional '#' comments, then a single whitespace byte before pixels.
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(tok) for tok in tokens)
    except ValueError as exc:
        raise ValueError("malformed PGM header") from exc
    if w < 1 or h < 1 or w > 65535 or h > 65535:
        raise ValueError(f"PGM dimensions out of range: {w}x{h}")
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=pos)
    if pixels.size != h * w:
        raise ValueError("PGM pixel payload shorter than header promises")
    return pixels.reshape(h, w).astype(np.float64) / 127.5 - 1.0
