"""End-cloud surveillance video transmission toolkit.

Camera-side pipeline (4x bicubic downsampling, redundant-frame
elimination, key-frame selection, stream packing), a cloud-side service
that reconstructs HR video through a pluggable reconstructor, and the
metrics/bpp accounting used to evaluate both.
"""

from .frames import (
    FrameError,
    VideoSequence,
    quantize_u8,
    read_raw,
    read_sequence,
    sequence_from_arrays,
    to_luma,
    write_raw,
    write_sequence,
)
from .resample import downsample_4x, kernel_weight, upsample_4x
from .metrics import (
    BppRow,
    PsnrCurve,
    bpp_saving,
    interframe_psnr_curve,
    mse,
    psnr,
    ssim,
    system_bpp,
)
from .redundancy import (
    MotionMask,
    RedundancyConfig,
    RedundancyIndex,
    detect_redundant,
    drop_redundant,
    motion_mask,
    motion_region_mse,
    restore_redundant,
)
from .keyframes import (
    KeyFrameIndex,
    SelectionConfig,
    fixed_interval,
    local_maxima,
    select_adaptive,
    select_keyframes,
    smooth_curve,
)
from .bundle import BundleError, CodecAdapter, measure_bits, pack, unpack
from .endcloud import (
    CloudServer,
    EndNodeConfig,
    Reconstructor,
    build_bundle,
    classical_reconstruct,
    external_reconstruct,
    process_bundle,
    run_end_node,
)
from .quality import QualityReport, evaluate

__version__ = "0.1.0"
