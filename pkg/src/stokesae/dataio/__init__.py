"""Scan parsing, frame assembly, scaling, splits and the dataset container."""
from .dataset import (
    CONTINUUM,
    AssemblyError,
    PixelDataset,
    QuietSunError,
    SpectralCube,
    assemble_scans,
    dataset_from_bytes,
    dataset_hash,
    dataset_to_bytes,
    flatten_spatial,
    load_dataset,
    quiet_sun_continuum,
    save_dataset,
    scale_dataset,
    unflatten,
)
from .fits import FitsError, FitsHDU, UnsupportedFitsError, parse_fits, read_fits, write_fits
from .scaling import (
    DegenerateProfileError,
    ScalingParams,
    degenerate_mask,
    scale_i,
    scale_profiles,
    scale_v,
    unscale,
    unscale_i,
    unscale_v,
)
from .splits import VERSIONS, PlanError, Rect, SplitPlan, load_plan, split_dataset, whole_frame_plan
