"""Icosahedral sphere-grid toolkit for 360-degree images.

Meshes and point location, gather tables for spherical convolution and
pooling, conversions between equirectangular / cubemap / sphere-grid
images, area-irregularity analysis, reference neural ops with hand-written
backward passes, and bit-exact file formats.
"""

from .geometry import (
    SphereMesh,
    antipodal_pixels,
    build_base_icosahedron,
    build_mesh,
    decode_pixel_index,
    encode_pixel_index,
    locate,
    pixel_area,
    pixel_areas,
    pixel_centroid,
    pixel_centroids,
    pixel_count,
    subdivide,
    vertex_degrees,
)
from .indexing import (
    CONV_ARITY,
    KERNEL_LAYOUT,
    ConvTable,
    KernelLayout,
    PoolTable,
    UnsupportedSubdivisionError,
    build_conv_table,
    build_pool_table,
    build_unpool_table,
    edge_neighbors,
    verify_tables,
)
from .irregularity import (
    AreaVector,
    CubeRep,
    ErpRep,
    IrregularityResult,
    SphdRep,
    binned_irregularity,
    effective_areas,
    irregularity,
    pixel_directions,
)
from .nnops import (
    ConvParams,
    SphdClassifier,
    avg_pool,
    conv_backward,
    conv_forward,
    global_avg_pool,
    init_conv_params,
    max_pool,
    max_unpool,
    softmax_cross_entropy,
)
from .projection import (
    CubeMap,
    ErpImage,
    SphdImage,
    cubemap_sample,
    cubemap_to_erp,
    cubemap_to_sphd,
    erp_sample,
    erp_to_cubemap,
    erp_to_sphd,
    gnomonic_stamp,
    random_rotation,
    rotation_about_z,
    sphd_to_cubemap,
    sphd_to_erp,
)

__version__ = "0.1.0"
