use nalgebra::{DMatrix, DVector};

use super::rbf::mean_nearest_neighbor;
use crate::dsp::{band_power, psd, stft_frames, BandDefinition, STFT_WINDOW};
use crate::error::{GeegaError, Result};
use crate::signal_io::{Montage, Segment};

/// Height and width of every feature map.
pub const MAP_SIZE: usize = 32;

/// Pixel-centre coordinates of the map grid: column j maps to x, row i to
/// y with row 0 at the top (+y, towards the nose).
pub fn grid_coordinates() -> Vec<(f64, f64)> {
    let step = 2.0 / MAP_SIZE as f64;
    (0..MAP_SIZE)
        .flat_map(|i| (0..MAP_SIZE).map(move |j| (-1.0 + (j as f64 + 0.5) * step, 1.0 - (i as f64 + 0.5) * step)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopoOptions {
    /// Welch window length and overlap for the band powers.
    pub psd_window_seconds: f64,
    pub psd_overlap: f64,
    /// Interpolate `ln(power)` instead of power.
    pub log_power: bool,
}

impl Default for TopoOptions {
    fn default() -> Self {
        TopoOptions {
            psd_window_seconds: 1.0,
            psd_overlap: 0.5,
            log_power: false,
        }
    }
}

/// RBF system of one montage, factored once and reused for every band.
pub struct TopoGrid {
    n: usize,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// `[pixels x (n + 3)]` basis values; rows outside the disc are zero.
    basis: DMatrix<f64>,
}

impl TopoGrid {
    pub fn new(montage: &Montage) -> Result<Self> {
        let nodes: Vec<(f64, f64)> = montage.electrodes.iter().map(|e| (e.x, e.y)).collect();
        let n = nodes.len();
        if n < 3 {
            return Err(GeegaError::Parameter(format!(
                "montage {} has {n} electrodes, topomaps need at least 3",
                montage.name
            )));
        }
        // validates the layout (duplicates, collinearity) with the reference fit
        let eps = mean_nearest_neighbor(&nodes);
        super::rbf::rbf_fit(&nodes, &vec![0.0; n], eps)?;
        let phi = |a: (f64, f64), b: (f64, f64)| {
            let (dx, dy) = (a.0 - b.0, a.1 - b.1);
            (-(dx * dx + dy * dy) / (eps * eps)).exp()
        };
        let mut a = DMatrix::<f64>::zeros(n + 3, n + 3);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = phi(nodes[i], nodes[j]);
            }
            for (k, v) in [1.0, nodes[i].0, nodes[i].1].into_iter().enumerate() {
                a[(i, n + k)] = v;
                a[(n + k, i)] = v;
            }
        }
        let grid = grid_coordinates();
        let mut basis = DMatrix::<f64>::zeros(grid.len(), n + 3);
        for (r, &p) in grid.iter().enumerate() {
            if p.0 * p.0 + p.1 * p.1 > 1.0 {
                continue;
            }
            for (j, &q) in nodes.iter().enumerate() {
                basis[(r, j)] = phi(p, q);
            }
            basis[(r, n)] = 1.0;
            basis[(r, n + 1)] = p.0;
            basis[(r, n + 2)] = p.1;
        }
        Ok(TopoGrid { n, lu: a.lu(), basis })
    }

    pub fn n_electrodes(&self) -> usize {
        self.n
    }

    /// Interpolates one value per electrode onto the masked grid.
    pub fn render(&self, values: &[f64], band: &str) -> Result<Vec<f64>> {
        if values.len() != self.n {
            return Err(GeegaError::Parameter(format!(
                "band {band}: {} values for {} electrodes",
                values.len(),
                self.n
            )));
        }
        let mut rhs = DVector::<f64>::zeros(self.n + 3);
        rhs.rows_mut(0, self.n).copy_from_slice(values);
        let sol = self
            .lu
            .solve(&rhs)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or_else(|| GeegaError::Numeric(format!("singular interpolation system in band {band}")))?;
        Ok((&self.basis * sol).iter().copied().collect())
    }
}

/// Band power per channel, `[channel][band]`.
pub fn band_powers(segment: &Segment, bands: &[BandDefinition], opts: &TopoOptions) -> Result<Vec<Vec<f64>>> {
    segment
        .data
        .iter()
        .map(|x| {
            let p = psd(x, segment.sample_rate_hz, opts.psd_window_seconds, opts.psd_overlap)?;
            bands.iter().map(|b| band_power(&p, b)).collect()
        })
        .collect()
}

/// `[k x 32 x 32]` band-power maps, flattened band-major.
pub fn topomap(
    segment: &Segment,
    grid: &TopoGrid,
    bands: &[BandDefinition],
    opts: &TopoOptions,
) -> Result<Vec<f64>> {
    if segment.n_channels() != grid.n_electrodes() {
        return Err(GeegaError::Parameter(format!(
            "segment has {} channels, montage has {} electrodes",
            segment.n_channels(),
            grid.n_electrodes()
        )));
    }
    let powers = band_powers(segment, bands, opts)?;
    let mut out = Vec::with_capacity(bands.len() * MAP_SIZE * MAP_SIZE);
    for (k, band) in bands.iter().enumerate() {
        let values: Vec<f64> = powers
            .iter()
            .map(|ch| if opts.log_power { ch[k].max(1e-12).ln() } else { ch[k] })
            .collect();
        out.extend(grid.render(&values, &band.name)?);
    }
    Ok(out)
}

/// Convenience wrapper that factors the montage system on every call.
pub fn topomap_for_montage(segment: &Segment, montage: &Montage, bands: &[BandDefinition]) -> Result<Vec<f64>> {
    topomap(segment, &TopoGrid::new(montage)?, bands, &TopoOptions::default())
}

/// Triangle-filter weights mapping `n_in` samples onto `n_out`. When
/// shrinking, the filter widens by the scale factor so every input sample
/// contributes (area-aware bilinear); when growing it is plain bilinear
/// with edge clamping.
fn resize_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    let fscale = scale.max(1.0);
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = ((center - fscale + 0.5).floor().max(0.0)) as usize;
            let hi = ((center + fscale + 0.5).floor() as usize).min(n_in);
            let mut w: Vec<f64> = (lo..hi)
                .map(|x| (1.0 - ((x as f64 - center + 0.5) / fscale).abs()).max(0.0))
                .collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            (lo, w)
        })
        .collect()
}

/// Separable bilinear resize of a row-major `[rows x cols]` matrix.
pub fn resize_bilinear(src: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    assert_eq!(src.len(), rows * cols, "resize input shape");
    let wc = resize_weights(cols, out_cols);
    let mut tmp = vec![0.0; rows * out_cols];
    for r in 0..rows {
        for (j, (lo, w)) in wc.iter().enumerate() {
            tmp[r * out_cols + j] = w.iter().enumerate().map(|(k, wk)| wk * src[r * cols + lo + k]).sum();
        }
    }
    let wr = resize_weights(rows, out_rows);
    let mut out = vec![0.0; out_rows * out_cols];
    for (i, (lo, w)) in wr.iter().enumerate() {
        for j in 0..out_cols {
            out[i * out_cols + j] = w.iter().enumerate().map(|(k, wk)| wk * tmp[(lo + k) * out_cols + j]).sum();
        }
    }
    out
}

/// `[c x 32 x 32]` log-magnitude spectrograms: rows follow time frames,
/// columns follow frequency bins.
pub fn spectrogram(segment: &Segment) -> Result<Vec<f64>> {
    if segment.len() < STFT_WINDOW {
        return Err(GeegaError::Parameter(format!(
            "segment of {} samples is shorter than one {STFT_WINDOW}-point frame",
            segment.len()
        )));
    }
    let mut out = Vec::with_capacity(segment.n_channels() * MAP_SIZE * MAP_SIZE);
    for x in &segment.data {
        let frames = stft_frames(x)?;
        let rows = frames.len();
        let cols = frames[0].len();
        let flat: Vec<f64> = frames.into_iter().flatten().map(f64::ln_1p).collect();
        out.extend(resize_bilinear(&flat, rows, cols, MAP_SIZE, MAP_SIZE));
    }
    Ok(out)
}
