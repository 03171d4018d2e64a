//! Ego-centred, heading-up occupancy raster standing in for the RGB camera.

use serde::{Deserialize, Serialize};

use crate::geom::rotate;
use crate::observation::Image;
use crate::track::TrackIndex;
use crate::vehicle::{VehicleParams, VehicleState};

pub const DRIVABLE: u8 = 255;
pub const OFF_TRACK: u8 = 0;
pub const CENTERLINE: u8 = 128;
pub const EGO: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub enabled: bool,
    pub width: u16,
    pub height: u16,
    /// Side length of the rendered window, in meters.
    pub window: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            enabled: false,
            width: 192,
            height: 192,
            window: 60.0,
        }
    }
}

impl CameraConfig {
    pub fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }
}

/// Body-frame (forward, left) offset of the centre of pixel `(row, col)`.
fn pixel_offset(cfg: &CameraConfig, row: usize, col: usize) -> [f64; 2] {
    let rx = cfg.window / cfg.width as f64;
    let ry = cfg.window / cfg.height as f64;
    let forward = (cfg.height as f64 / 2.0 - row as f64 - 0.5) * ry;
    let left = (cfg.width as f64 / 2.0 - col as f64 - 0.5) * rx;
    [forward, left]
}

/// Renders the drivable area (white), off-track ground (black) and the
/// centerline (grey) around the vehicle centre, forward pointing up. The ego
/// footprint is drawn as an outline so the centre pixel keeps the ground
/// value underneath it.
pub fn render_pseudocamera(
    state: &VehicleState,
    track: &TrackIndex,
    params: &VehicleParams,
    cfg: &CameraConfig,
) -> Image {
    let mut img = Image::new(cfg.width, cfg.height, 3);
    let center = state.body_center(params.wheelbase);
    let pixel = cfg.window / cfg.width.max(cfg.height) as f64;
    let line_half = 0.6 * pixel;
    let reach = track.max_half_width();
    for row in 0..cfg.height as usize {
        for col in 0..cfg.width as usize {
            let off = rotate(pixel_offset(cfg, row, col), state.yaw);
            let p = [center[0] + off[0], center[1] + off[1]];
            let value = match track.project_within(p, reach) {
                Some(proj) if track.offset_is_drivable(&proj) => {
                    if proj.d.abs() <= line_half {
                        CENTERLINE
                    } else {
                        DRIVABLE
                    }
                }
                _ => OFF_TRACK,
            };
            img.set_pixel(row, col, value);
        }
    }
    paint_ego(&mut img, cfg, params);
    img
}

fn paint_ego(img: &mut Image, cfg: &CameraConfig, params: &VehicleParams) {
    let half_len = params.wheelbase / 2.0;
    let half_w = params.track_width / 2.0;
    let rx = cfg.window / cfg.width as f64;
    let ry = cfg.window / cfg.height as f64;
    let inside = |f: f64, l: f64| f.abs() <= half_len && l.abs() <= half_w;
    for row in 0..cfg.height as usize {
        for col in 0..cfg.width as usize {
            let [f, l] = pixel_offset(cfg, row, col);
            if !inside(f, l) {
                continue;
            }
            // Outline: inside, but a neighbouring pixel centre is outside.
            let edge = !inside(f + ry, l) || !inside(f - ry, l) || !inside(f, l + rx) || !inside(f, l - rx);
            if edge {
                img.set_pixel(row, col, EGO);
            }
        }
    }
}
