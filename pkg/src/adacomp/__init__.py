"""Residual-gradient compression codecs and a deterministic synchronous
data-parallel training simulator built around them."""

from .codec import BinConfig, CodecState, GradientVector, PackedLayer, bin_maxima, layer_scale, pack, unpack
from .wire import EncodedLayer, decode, effective_compression_rate, encode

__all__ = [
    "BinConfig",
    "CodecState",
    "GradientVector",
    "PackedLayer",
    "bin_maxima",
    "layer_scale",
    "pack",
    "unpack",
    "EncodedLayer",
    "encode",
    "decode",
    "effective_compression_rate",
]
