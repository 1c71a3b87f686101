//! File formats consumed and produced by the command-line pipeline.
//!
//! * depth maps and plane-parameter maps: PFM (`Pf` / `PF`), invalid cells stored as 0
//! * images: 8-bit PNG, read as `[0, 1]` luma
//! * instance masks: 16-bit single-channel PNG of instance ids, 0 = background
//! * poses: 12 floats, row-major `[R | t]`, target to source
//! * intrinsics: `fx fy cx cy width height`
//! * instances: `id px py pz score [label]` per line
//! * cost/probability volumes: text header plus little-endian f32 payload

mod pfm;
mod png;
mod text;
mod volume;

pub use pfm::{
    read_depth_pfm, read_param_pfm, read_pfm, write_depth_pfm, write_param_pfm, write_pfm, PfmImage,
};
pub use png::{
    ids_to_instances, instances_to_ids, read_image_png, read_mask_png, write_image_png,
    write_mask_png,
};
pub use text::{
    format_instances, format_intrinsics, format_plane_samples, format_pose, parse_frames,
    parse_instances, parse_intrinsics, parse_plane_samples, parse_pose, read_text, Frame,
    InstanceRecord,
};
pub use volume::{read_volume, write_volume, RawVolume};
