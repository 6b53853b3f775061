"""Post-training weight quantization with linear and exponential interval partitions."""

from .errors import ConstantArrayError, DomainError, FormatError
from .partition import Codebook, Partition, Rounding, Scheme, assign_bins, build_codebook, make_partition
from .quantizer import (
    QuantizedTensor,
    correlation,
    heuristic_x0,
    normalize,
    quantize_network,
    quantize_tensor,
    sweep_x0,
)

__version__ = "0.1.0"
