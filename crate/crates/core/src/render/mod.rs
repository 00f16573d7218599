//! Differentiable CPU splatting.
//!
//! Gaussians are projected with the local affine (EWA) approximation, sorted
//! by depth (ties broken by input index) and alpha-composited front to back.
//! The image is processed in square tiles in parallel; every pixel's value is
//! a function of the sorted Gaussian list alone, so output does not depend on
//! the tile size or the number of threads.

mod project;
mod raster;
pub mod sh;

pub use project::{build_covariance, Projected, Projected2D};
pub use raster::{composite, composite_with_transmittance};

use rayon::prelude::*;

use crate::image::Image;
use crate::scene::Camera;
use project::{project_backward, project_one, ProjectionParams};
use raster::{composite_backward_pixel, PixelGrad};

/// Fixed rasterization constants and the image background.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    pub tile_size: usize,
    /// Per-channel background; an empty vector means all zeros.
    pub background: Vec<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub transmittance_min: f64,
    /// Added to the diagonal of every 2D covariance, in px².
    pub blur: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            tile_size: 16,
            background: Vec::new(),
            alpha_min: 1.0 / 255.0,
            alpha_max: 0.99,
            transmittance_min: 1e-4,
            blur: 0.3,
        }
    }
}

impl RenderSettings {
    pub fn with_tile_size(mut self, tile_size: usize) -> Self {
        self.tile_size = tile_size;
        self
    }

    pub fn with_background(mut self, background: Vec<f64>) -> Self {
        self.background = background;
        self
    }

    fn background_for(&self, dim: usize) -> Vec<f64> {
        if self.background.is_empty() {
            vec![0.0; dim]
        } else {
            assert_eq!(self.background.len(), dim, "background has wrong channel count");
            self.background.clone()
        }
    }

    fn projection(&self) -> ProjectionParams {
        ProjectionParams {
            blur: self.blur,
            alpha_min: self.alpha_min,
        }
    }
}

/// Activated per-Gaussian quantities handed to the rasterizer.
#[derive(Clone, Copy, Debug)]
pub struct SplatInputs<'a> {
    pub positions: &'a [[f64; 3]],
    /// Activated (positive, possibly masked) scales.
    pub scales: &'a [[f64; 3]],
    /// Raw quaternions; normalized internally.
    pub rotations: &'a [[f64; 4]],
    /// Activated (possibly masked) opacities in `[0, 1]`.
    pub opacities: &'a [f64],
    /// Row-major `N × dim` features (RGB when `dim == 3`).
    pub features: &'a [f64],
    pub dim: usize,
}

impl SplatInputs<'_> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn check(&self) {
        let n = self.len();
        assert!(self.dim >= 1, "feature dimension must be positive");
        assert_eq!(self.scales.len(), n);
        assert_eq!(self.rotations.len(), n);
        assert_eq!(self.opacities.len(), n);
        assert_eq!(self.features.len(), n * self.dim);
    }
}

/// Rendered feature map and per-pixel final transmittance.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub image: Image,
    pub transmittance: Vec<f64>,
}

/// Gradients of a scalar loss w.r.t. every rasterizer input.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGradients {
    pub positions: Vec<[f64; 3]>,
    pub scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacities: Vec<f64>,
    pub features: Vec<f64>,
    /// Gradient w.r.t. the pixel-space 2D means (used for densification).
    pub means2d: Vec<[f64; 2]>,
    pub background: Vec<f64>,
}

impl SplatGradients {
    pub fn zeros(n: usize, dim: usize) -> Self {
        SplatGradients {
            positions: vec![[0.0; 3]; n],
            scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacities: vec![0.0; n],
            features: vec![0.0; n * dim],
            means2d: vec![[0.0; 2]; n],
            background: vec![0.0; dim],
        }
    }
}

/// Projects, culls and depth-sorts the inputs.
pub fn project(inputs: &SplatInputs, cam: &Camera, settings: &RenderSettings) -> Projected2D {
    inputs.check();
    let params = settings.projection();
    let mut items: Vec<Projected> = (0..inputs.len())
        .into_par_iter()
        .filter_map(|i| {
            project_one(
                i,
                &inputs.positions[i],
                &inputs.scales[i],
                &inputs.rotations[i],
                inputs.opacities[i],
                cam,
                &params,
            )
        })
        .collect();
    items.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    Projected2D { items }
}

struct Tile {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    /// Positions in the sorted projected list overlapping this tile.
    list: Vec<usize>,
}

fn build_tiles(proj: &Projected2D, cam: &Camera, tile_size: usize) -> Vec<Tile> {
    assert!(tile_size > 0, "tile size must be positive");
    let tiles_x = cam.width.div_ceil(tile_size);
    let tiles_y = cam.height.div_ceil(tile_size);
    let mut tiles: Vec<Tile> = (0..tiles_y)
        .flat_map(|ty| {
            (0..tiles_x).map(move |tx| Tile {
                x0: tx * tile_size,
                y0: ty * tile_size,
                x1: ((tx + 1) * tile_size).min(cam.width),
                y1: ((ty + 1) * tile_size).min(cam.height),
                list: Vec::new(),
            })
        })
        .collect();
    for (pos, p) in proj.items.iter().enumerate() {
        let [bx0, by0, bx1, by1] = p.bounds;
        for ty in by0 / tile_size..=by1 / tile_size {
            for tx in bx0 / tile_size..=bx1 / tile_size {
                tiles[ty * tiles_x + tx].list.push(pos);
            }
        }
    }
    tiles
}

/// Forward render of `dim`-channel features.
pub fn render(inputs: &SplatInputs, cam: &Camera, settings: &RenderSettings) -> RenderOutput {
    let proj = project(inputs, cam, settings);
    render_projected(&proj, inputs, cam, settings)
}

/// Forward render from an existing projection.
pub fn render_projected(
    proj: &Projected2D,
    inputs: &SplatInputs,
    cam: &Camera,
    settings: &RenderSettings,
) -> RenderOutput {
    let dim = inputs.dim;
    let background = settings.background_for(dim);
    let tiles = build_tiles(proj, cam, settings.tile_size);
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = tiles
        .par_iter()
        .map(|tile| {
            let items: Vec<&Projected> = tile.list.iter().map(|&i| &proj.items[i]).collect();
            let mut colors = Vec::with_capacity((tile.x1 - tile.x0) * (tile.y1 - tile.y0) * dim);
            let mut trans = Vec::with_capacity((tile.x1 - tile.x0) * (tile.y1 - tile.y0));
            for y in tile.y0..tile.y1 {
                for x in tile.x0..tile.x1 {
                    let (c, t) = raster::composite_items(&items, inputs.features, dim, &background, x, y, settings);
                    colors.extend_from_slice(&c);
                    trans.push(t);
                }
            }
            (colors, trans)
        })
        .collect();

    let mut image = Image::new(cam.width, cam.height, dim);
    let mut transmittance = vec![0.0; cam.width * cam.height];
    for (tile, (colors, trans)) in tiles.iter().zip(blocks) {
        let mut k = 0;
        for y in tile.y0..tile.y1 {
            for x in tile.x0..tile.x1 {
                image.pixel_mut(x, y).copy_from_slice(&colors[k * dim..(k + 1) * dim]);
                transmittance[y * cam.width + x] = trans[k];
                k += 1;
            }
        }
    }
    RenderOutput { image, transmittance }
}

/// Analytic gradients of `Σ d_image ⊙ render(inputs)`.
///
/// Per-tile partial sums are reduced in tile order, so results are
/// independent of the thread count.
pub fn render_backward(inputs: &SplatInputs, cam: &Camera, settings: &RenderSettings, d_image: &Image) -> SplatGradients {
    let dim = inputs.dim;
    assert_eq!(d_image.channels, dim);
    assert_eq!((d_image.width, d_image.height), (cam.width, cam.height));
    let background = settings.background_for(dim);
    let proj = project(inputs, cam, settings);
    let tiles = build_tiles(&proj, cam, settings.tile_size);

    let partials: Vec<(Vec<PixelGrad>, Vec<f64>)> = tiles
        .par_iter()
        .map(|tile| {
            let items: Vec<&Projected> = tile.list.iter().map(|&i| &proj.items[i]).collect();
            let mut grads = vec![PixelGrad::zeros(dim); items.len()];
            let mut d_bg = vec![0.0; dim];
            for y in tile.y0..tile.y1 {
                for x in tile.x0..tile.x1 {
                    composite_backward_pixel(
                        &items,
                        inputs.features,
                        dim,
                        &background,
                        x,
                        y,
                        settings,
                        d_image.pixel(x, y),
                        &mut grads,
                        &mut d_bg,
                    );
                }
            }
            (grads, d_bg)
        })
        .collect();

    let mut per_item = vec![PixelGrad::zeros(dim); proj.len()];
    let mut out = SplatGradients::zeros(inputs.len(), dim);
    for (tile, (grads, d_bg)) in tiles.iter().zip(partials) {
        for (&pos, g) in tile.list.iter().zip(grads) {
            per_item[pos].add(&g);
        }
        for (a, b) in out.background.iter_mut().zip(d_bg) {
            *a += b;
        }
    }

    let results: Vec<_> = proj
        .items
        .par_iter()
        .zip(per_item.par_iter())
        .map(|(p, g)| {
            let i = p.index;
            let pg = project_backward(
                &inputs.positions[i],
                &inputs.scales[i],
                &inputs.rotations[i],
                cam,
                settings.blur,
                g.mean,
                g.conic,
            );
            (i, pg)
        })
        .collect();
    for ((i, pg), (p, g)) in results.into_iter().zip(proj.items.iter().zip(&per_item)) {
        debug_assert_eq!(i, p.index);
        out.positions[i] = pg.position;
        out.scales[i] = pg.scale;
        out.rotations[i] = pg.rotation;
        out.opacities[i] = g.opacity;
        out.means2d[i] = g.mean;
        out.features[i * dim..(i + 1) * dim].copy_from_slice(&g.features);
    }
    out
}
