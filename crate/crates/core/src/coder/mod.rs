//! Range coding of occupancy symbols and the `VCNB` container.

pub mod bitstream;
mod codec;
pub mod freq;
pub mod range;

pub use bitstream::{BitstreamHeader, FrameInfo, Mode};
pub use codec::{
    cross_entropy_bpp, decode_cloud, decode_cloud_full, encode_cloud, encode_cloud_with_report,
    CodingStats, DecodedCloud, EncodeReport,
};
pub use freq::{quantize_distribution, FrequencyTable};
pub use range::{rc_decode, rc_encode, RangeDecoder, RangeEncoder, TableSource};

pub(crate) mod codec_support {
    pub(crate) use super::codec::{check_depths, check_model, drive, point_count, prepare_cloud};
}
