//! Python bindings: models, images, metrics, rewards and training.

use std::collections::HashMap;
use std::path::PathBuf;

use pathroute::checkpoint::{self, model_config_from_meta, model_meta};
use pathroute::config::RunConfig;
use pathroute::distortion::{self, NoiseSpec};
use pathroute::image::{self as img, Image};
use pathroute::metrics::{self, Policy};
use pathroute::model::{self, Model, ModelConfig, RouteMode};
use pathroute::pipeline;
use pathroute::reward;
use pathroute::trainer::{self, Stage};
use pathroute::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for pathroute::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "ModelConfig", from_py_object)]
#[derive(Clone)]
pub struct PyModelConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (blocks=6, paths=2, pathfinder_convs=2, features=32, hidden=32, pathfinder_width=8, channels=1, patch=63))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        blocks: usize,
        paths: usize,
        pathfinder_convs: usize,
        features: usize,
        hidden: usize,
        pathfinder_width: usize,
        channels: usize,
        patch: usize,
    ) -> PyResult<Self> {
        let inner = ModelConfig {
            blocks,
            paths,
            pathfinder_convs,
            features,
            hidden,
            pathfinder_width,
            channels,
            patch,
        };
        inner.validate().py()?;
        Ok(PyModelConfig { inner })
    }

    #[staticmethod]
    fn denoising() -> Self {
        PyModelConfig {
            inner: ModelConfig::denoising(),
        }
    }

    #[staticmethod]
    fn mixed() -> Self {
        PyModelConfig {
            inner: ModelConfig::mixed(),
        }
    }

    #[getter]
    fn blocks(&self) -> usize {
        self.inner.blocks
    }

    #[getter]
    fn paths(&self) -> usize {
        self.inner.paths
    }

    #[getter]
    fn features(&self) -> usize {
        self.inner.features
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }

    #[getter]
    fn patch(&self) -> usize {
        self.inner.patch
    }

    /// `(min, max)` FLOPs per region.
    fn flop_bounds(&self) -> (u64, u64) {
        model::flop_bounds(&self.inner)
    }

    fn pathfinder_flops(&self) -> u64 {
        model::pathfinder_flops(&self.inner)
    }

    fn count_flops(&self, route: Vec<usize>) -> PyResult<u64> {
        Ok(model::count_flops(&route, &self.inner).py()?.total())
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Planar image with values in `[0, 1]`.
#[pyclass(name = "Image", from_py_object)]
#[derive(Clone)]
pub struct PyImage {
    inner: Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> PyResult<Self> {
        Ok(PyImage {
            inner: Image::new(channels, height, width, data).py()?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyImage {
            inner: img::read_pnm(&path).py()?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        img::write_pnm(&path, &self.inner).py()
    }

    /// `(channels, height, width)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    /// Values in channel, row, column order.
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn get(&self, c: usize, y: usize, x: usize) -> PyResult<f32> {
        let (ch, h, w) = self.inner.dims();
        if c >= ch || y >= h || x >= w {
            return Err(PyValueError::new_err(format!("({c}, {y}, {x}) outside {ch}x{h}x{w}")));
        }
        Ok(self.inner.get(c, y, x))
    }

    fn mean(&self) -> f32 {
        self.inner.mean()
    }
}

#[pyclass(name = "Model")]
pub struct PyModel {
    inner: Model,
}

fn policy_of(name: &str, blocks: usize) -> PyResult<Policy> {
    match name {
        "argmax" => Ok(Policy::Argmax),
        "bypass" => Ok(Policy::Forced(vec![model::BYPASS; blocks])),
        "full" => Ok(Policy::Forced(vec![1; blocks])),
        other => Err(PyValueError::new_err(format!("unknown policy `{other}`"))),
    }
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (config, seed=0))]
    fn new(config: PyModelConfig, seed: u64) -> PyResult<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Ok(PyModel {
            inner: Model::new(config.inner, &mut rng).py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = checkpoint::load(&path).py()?;
        let cfg = model_config_from_meta(&ck.meta).py()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut inner = Model::new(cfg, &mut rng).py()?;
        inner.load_params(ck.params).py()?;
        Ok(PyModel { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&path, self.inner.params(), &model_meta(self.inner.config())).py()
    }

    #[getter]
    fn config(&self) -> PyModelConfig {
        PyModelConfig {
            inner: self.inner.config().clone(),
        }
    }

    fn parameter_count(&self) -> usize {
        self.inner.params().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Restores one patch with the argmax route, or with `route` when given.
    /// Returns `(restored, actions, probabilities)`; probabilities are empty for forced routes.
    #[pyo3(signature = (patch, route=None))]
    fn restore_patch(
        &self,
        patch: &PyImage,
        route: Option<Vec<usize>>,
    ) -> PyResult<(PyImage, Vec<usize>, Vec<Vec<f32>>)> {
        let t = patch.inner.to_tensor();
        let (out, actions, trace) = match &route {
            Some(r) => self.inner.restore_patch(&t, RouteMode::Replay(r)).py()?,
            None => self.inner.restore_patch(&t, RouteMode::Test).py()?,
        };
        let probs = trace
            .map(|t| t.steps.into_iter().map(|s| s.probs).collect())
            .unwrap_or_default();
        Ok((
            PyImage {
                inner: Image::from_tensor(&out).py()?,
            },
            actions,
            probs,
        ))
    }

    /// Tiled restoration. Returns the image and `(top, left, actions, flops)` per region.
    #[pyo3(signature = (image, policy="argmax"))]
    #[allow(clippy::type_complexity)]
    fn restore(&self, image: &PyImage, policy: &str) -> PyResult<(PyImage, Vec<(usize, usize, Vec<usize>, u64)>)> {
        let policy = policy_of(policy, self.inner.config().blocks)?;
        let (out, routes) = metrics::restore_image(&self.inner, &image.inner, &policy).py()?;
        let routes = routes
            .into_iter()
            .map(|r| (r.top, r.left, r.actions, r.flops))
            .collect();
        Ok((PyImage { inner: out }, routes))
    }

    fn count_flops(&self, route: Vec<usize>) -> PyResult<u64> {
        Ok(self.inner.count_flops(&route).py()?.total())
    }
}

#[pyfunction]
fn psnr(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    metrics::psnr(&a.inner, &b.inner).py()
}

#[pyfunction]
fn ssim(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    metrics::ssim(&a.inner, &b.inner).py()
}

/// Procedural test scene.
#[pyfunction]
#[pyo3(signature = (height, width, seed=0, channels=1))]
fn scene(height: usize, width: usize, seed: u64, channels: usize) -> PyImage {
    PyImage {
        inner: distortion::scene(channels, height, width, seed),
    }
}

/// Adds Gaussian noise of fixed σ (8-bit units), then optional blur and compression.
#[pyfunction]
#[pyo3(signature = (image, sigma, seed=0, blur=None, quality=None))]
fn degrade(image: &PyImage, sigma: f32, seed: u64, blur: Option<f32>, quality: Option<u32>) -> PyResult<PyImage> {
    let spec = distortion::DegradationSpec {
        blur: blur.map(|b| (b, b)),
        noise: NoiseSpec::fixed(sigma),
        quality: quality.map(|q| (q, q)),
    };
    Ok(PyImage {
        inner: distortion::degrade_image(&image.inner, &spec, seed).py()?.0,
    })
}

#[pyfunction]
fn difficulty(loss: f32, threshold: f32) -> PyResult<f32> {
    reward::difficulty(loss, threshold).py()
}

#[pyfunction]
fn step_reward(block: usize, blocks: usize, action: usize, penalty: f32, difficulty: f32, delta_l2: f32) -> f32 {
    reward::step_reward(block, blocks, action, penalty, difficulty, delta_l2)
}

#[pyfunction]
fn conv_flops(kernel: usize, c_in: usize, c_out: usize, out_h: usize, out_w: usize) -> u64 {
    model::conv_flops(kernel, c_in, c_out, out_h, out_w)
}

/// Number of regions the tiling produces for an image of this size.
#[pyfunction]
#[pyo3(signature = (height, width, patch=63))]
fn region_count(height: usize, width: usize, patch: usize) -> PyResult<usize> {
    Ok(
        distortion::PatchGrid::new(height, width, patch, distortion::default_stride(patch))
            .py()?
            .len(),
    )
}

/// `(iter, loss, mean_reward, mean_flops, psnr)`.
type MetricsTuple = (usize, f32, f32, f64, f64);

/// Runs one training stage from the model's current weights using a
/// `key = value` config text. Returns `(iter, loss, mean_reward, mean_flops, psnr)` rows.
#[pyfunction]
#[pyo3(signature = (model, config, stage=1))]
fn train(model: &mut PyModel, config: &str, stage: u8) -> PyResult<Vec<MetricsTuple>> {
    let cfg = RunConfig::parse(config).py()?;
    if &cfg.model != model.inner.config() {
        return Err(PyValueError::new_err("config architecture differs from the model"));
    }
    let stage = Stage::from_number(stage).py()?;
    let data = pipeline::training_dataset(&cfg).py()?;
    let holdout = pipeline::holdout_set(&cfg).py()?;
    model.inner.params_mut().reset_optimizer();
    let rows = trainer::train(
        &mut model.inner,
        &cfg.train,
        &data,
        &holdout,
        stage,
        0,
        |_| Ok(()),
        |_, _| Ok(()),
    )
    .py()?;
    Ok(rows
        .iter()
        .map(|r| (r.iter, r.loss, r.mean_reward, r.mean_flops, r.psnr))
        .collect())
}

/// Evaluates on the config's test set; returns the summary statistics.
#[pyfunction]
#[pyo3(signature = (model, config, policy="argmax"))]
fn evaluate(model: &PyModel, config: &str, policy: &str) -> PyResult<HashMap<String, f64>> {
    let cfg = RunConfig::parse(config).py()?;
    let set = pipeline::test_set(&cfg).py()?;
    let policy = policy_of(policy, model.inner.config().blocks)?;
    let (report, _) = metrics::evaluate(&model.inner, &set, &policy).py()?;
    Ok(HashMap::from([
        ("psnr".to_string(), report.psnr),
        ("ssim".to_string(), report.ssim),
        ("input_psnr".to_string(), report.input_psnr),
        ("mean_flops".to_string(), report.mean_flops),
        ("n_regions".to_string(), report.n_regions as f64),
    ]))
}

#[pymodule]
#[pyo3(name = "pathroute")]
fn pathroute_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(scene, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(difficulty, m)?)?;
    m.add_function(wrap_pyfunction!(step_reward, m)?)?;
    m.add_function(wrap_pyfunction!(conv_flops, m)?)?;
    m.add_function(wrap_pyfunction!(region_count, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
