"""The four recurrent cell families.

Every family module exposes the same surface: ``init_params``,
``init_state``, ``step(params, state, s_t) -> (state, logits)``, and
params objects with ``tensors()`` / ``trainable()``.
"""

from ..errors import ConfigError
from . import fastweights, lstm, rhn, weinet
from .weinet import unrolled_memory_closed_form

FAMILIES = {
    "weinet": weinet,
    "fastweights": fastweights,
    "lstm": lstm,
    "rhn": rhn,
}


def get_family(name: str):
    try:
        return FAMILIES[name]
    except KeyError:
        raise ConfigError(
            f"unknown model family {name!r}; valid families: {', '.join(sorted(FAMILIES))}"
        ) from None


def init_params(arch: str, in_dim: int, hidden: int, out_dim: int, seed: int, **kwargs):
    """Initialize parameters for any family; family-specific knobs via kwargs."""
    return get_family(arch).init_params(in_dim, hidden, out_dim, seed, **kwargs)


__all__ = [
    "FAMILIES",
    "fastweights",
    "get_family",
    "init_params",
    "lstm",
    "rhn",
    "unrolled_memory_closed_form",
    "weinet",
]
