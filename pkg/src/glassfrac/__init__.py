"""Physically based glass-fracture corruptions for camera images."""
from .errors import (
    AnnotationParseError,
    DegenerateGeometryError,
    GlassFracError,
    InvalidArgumentError,
    NoFrontierError,
)
from .mesh_gen import (
    NeighborIndex,
    ParticleSet,
    TriMesh,
    build_neighbor_index,
    default_radius,
    query_radius,
    sample_particles,
    triangulate,
)
from .stress_sim import (
    CrackPattern,
    ImpactSpec,
    StressField,
    edge_stress,
    extract_crack_pattern,
    fracture_condition,
    propagate,
    select_splitting_edge,
    simulate_timesteps,
    summed_stress,
)
from .crack_raster import BinaryMask, CrackImage, crack_mask, rasterize
from .pbr_overlay import (
    LightSource,
    OverlayResult,
    RenderConfig,
    apply_focus,
    composite,
    crack_intensity,
    mean_incident_energy,
    shade_pattern,
)
from .pipeline import (
    BoundingBox,
    PipelineConfig,
    animate,
    load_annotations,
    objects_in_crack,
    process_image,
    run_batch,
    simulate,
)
from .analysis import IntensityDistribution, TimingReport, intensity_histogram, kl_divergence, timing_report

__version__ = "0.1.0"
