//! Image containers, pixel primitives, homography geometry and raster I/O.

mod filter;
mod geometry;
mod image;
mod io;
mod keypoint;
mod mask;
mod photometric;

pub use filter::{convolve_separable, gaussian_blur, gaussian_kernel, rgb_to_gray, sobel_gradients, Gradients};
pub use geometry::{project_point, Homography};
pub use image::{reflect101, resize_bilinear, resize_rgb_bilinear, GrayImage, RgbImage};
pub use io::{load_image, load_mask, save_image, save_mask};
pub use keypoint::{
    keypoints_from_csv, keypoints_to_csv, read_keypoints_csv, write_keypoints_csv, Keypoint, KeypointList,
    DEFAULT_SCALE,
};
pub use mask::{BinaryMask, EdgeMap};
pub use photometric::{degrade_photometric, sample_degradation};
