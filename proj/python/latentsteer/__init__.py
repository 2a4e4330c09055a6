"""Text-driven latent manipulation: global directions, latent optimization and mappers."""

import json

from ._core import (
    DEFAULT_PAIR_COUNT,
    DEFAULT_PERTURB_ALPHA,
    DEFAULT_TEMPLATE_BANK,
    Backend,
    ChannelStats,
    LatentsteerError,
    Mapper,
    decode_png,
    encode_png,
    template_bank,
)

__all__ = [
    "DEFAULT_PAIR_COUNT",
    "DEFAULT_PERTURB_ALPHA",
    "DEFAULT_TEMPLATE_BANK",
    "Backend",
    "ChannelStats",
    "LatentsteerError",
    "Mapper",
    "decode_png",
    "encode_png",
    "template_bank",
    "toy_backend",
    "train_mapper",
]


def toy_backend(**options):
    """Deterministic toy backend; options follow the backend config JSON keys."""
    return Backend.from_json(json.dumps({"kind": "toy", **options}))


def train_mapper(backend, prompt, latents=None, count=32, latent_seed=0, progress=None, **config):
    """Train a residual mapper; latents default to `count` prior samples."""
    if latents is None:
        latents = backend.sample_training_latents(count, latent_seed)
    return backend.train_mapper(prompt, list(latents), json.dumps(config), progress)
