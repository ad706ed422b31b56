//! Multinomial logistic regression trained by full-batch gradient descent.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, IoContext, Result};
use crate::gesture::features::{featurize, FEATURE_DIM, FEATURE_SPEC_VERSION};
use crate::gesture::pose::PoseFrame;
use crate::gesture::GestureClass;
use crate::ingest::write_atomic;

pub const MODEL_MAGIC: &str = "GLM1";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Rejected steps allowed before training stops with the current model.
    pub max_halvings: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
            max_halvings: 20,
        }
    }
}

/// `C × F` weights (row-major) and `C` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub classes: usize,
    pub features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub feature_spec_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub halvings: usize,
    pub final_learning_rate: f64,
}

impl ClassifierModel {
    pub fn zeros(classes: usize, features: usize) -> Self {
        ClassifierModel {
            classes,
            features,
            weights: vec![0.0; classes * features],
            bias: vec![0.0; classes],
            feature_spec_version: FEATURE_SPEC_VERSION.to_string(),
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let w = &self.weights[c * self.features..(c + 1) * self.features];
                self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Softmax class probabilities.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.features {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.features,
                x.len()
            )));
        }
        Ok(softmax(&self.logits(x)))
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Most probable class; ties go to the lexicographically first label name.
pub fn classify(model: &ClassifierModel, features: &[f64]) -> Result<(GestureClass, Vec<f64>)> {
    if model.classes != GestureClass::COUNT {
        return Err(Error::invalid(format!("model has {} classes, expected {}", model.classes, GestureClass::COUNT)));
    }
    let p = model.probabilities(features)?;
    let mut best = 0;
    for c in 1..p.len() {
        let better = p[c] > p[best] || (p[c] == p[best] && GestureClass::ALL[c].name() < GestureClass::ALL[best].name());
        if better {
            best = c;
        }
    }
    Ok((GestureClass::ALL[best], p))
}

/// Mean cross-entropy plus `l2/2 · ‖W‖²` (biases are not penalized).
pub fn loss(model: &ClassifierModel, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> f64 {
    let ce: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = model.logits(x);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - z[y]
        })
        .sum::<f64>()
        / xs.len() as f64;
    ce + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`loss`] as `(dW, db)`.
pub fn gradient(model: &ClassifierModel, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> (Vec<f64>, Vec<f64>) {
    let (c_n, f_n) = (model.classes, model.features);
    let mut gw = vec![0.0; c_n * f_n];
    let mut gb = vec![0.0; c_n];
    for (x, &y) in xs.iter().zip(ys) {
        let mut p = softmax(&model.logits(x));
        p[y] -= 1.0;
        for c in 0..c_n {
            gb[c] += p[c];
            for f in 0..f_n {
                gw[c * f_n + f] += p[c] * x[f];
            }
        }
    }
    let n = xs.len() as f64;
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
    }
    gb.iter_mut().for_each(|g| *g /= n);
    (gw, gb)
}

/// Train on feature vectors and class indices. A step that would raise the
/// loss is rejected and the learning rate halved.
pub fn train_on_features(xs: &[Vec<f64>], ys: &[usize], classes: usize, params: &TrainParams) -> Result<(ClassifierModel, TrainReport)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid("training set is empty or labels do not match"));
    }
    let features = xs[0].len();
    if xs.iter().any(|x| x.len() != features) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    if ys.iter().any(|&y| y >= classes) {
        return Err(Error::invalid("label index out of range"));
    }
    let mut present = vec![false; classes];
    ys.iter().for_each(|&y| present[y] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid("training data must contain at least two classes"));
    }

    let mut model = ClassifierModel::zeros(classes, features);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    model.weights.iter_mut().for_each(|w| *w = init.sample(&mut rng));

    let mut lr = params.learning_rate;
    let mut current = loss(&model, xs, ys, params.l2);
    let mut report = TrainReport {
        losses: vec![current],
        halvings: 0,
        final_learning_rate: lr,
    };
    let mut epoch = 0;
    while epoch < params.epochs {
        if !current.is_finite() {
            return Err(Error::Numerical(format!("non-finite training loss at epoch {epoch}")));
        }
        let (gw, gb) = gradient(&model, xs, ys, params.l2);
        let mut candidate = model.clone();
        candidate.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= lr * g);
        candidate.bias.iter_mut().zip(&gb).for_each(|(b, g)| *b -= lr * g);
        let next = loss(&candidate, xs, ys, params.l2);
        if next.is_finite() && next <= current {
            model = candidate;
            current = next;
            report.losses.push(current);
            epoch += 1;
        } else if report.halvings < params.max_halvings {
            lr /= 2.0;
            report.halvings += 1;
        } else if !next.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite training loss at epoch {epoch} after {} halvings",
                report.halvings
            )));
        } else {
            break;
        }
    }
    report.final_learning_rate = lr;
    Ok((model, report))
}

/// Featurize labeled frames and train. Frames that cannot be featurized are
/// an error.
pub fn train_classifier(labeled: &[(PoseFrame, GestureClass)], params: &TrainParams) -> Result<(ClassifierModel, TrainReport)> {
    let mut xs = Vec::with_capacity(labeled.len());
    let mut ys = Vec::with_capacity(labeled.len());
    for (i, (frame, label)) in labeled.iter().enumerate() {
        let f = featurize(frame).map_err(|e| Error::invalid(format!("training frame {i} is unusable: {e:?}")))?;
        xs.push(f.to_vec());
        ys.push(label.index());
    }
    train_on_features(&xs, &ys, GestureClass::COUNT, params)
}

/// Fraction of frames whose predicted label matches; unusable frames count
/// as misses.
pub fn evaluate(model: &ClassifierModel, labeled: &[(PoseFrame, GestureClass)]) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let mut hits = 0usize;
    for (frame, label) in labeled {
        if let Ok(f) = featurize(frame) {
            hits += (classify(model, &f)?.0 == *label) as usize;
        }
    }
    Ok(hits as f64 / labeled.len() as f64)
}

pub fn encode_model(model: &ClassifierModel) -> String {
    let mut s = format!(
        "{MODEL_MAGIC} {} {} {}\n",
        model.classes, model.features, model.feature_spec_version
    );
    for c in 0..model.classes {
        let row = &model.weights[c * model.features..(c + 1) * model.features];
        let values: Vec<String> = row.iter().chain(std::iter::once(&model.bias[c])).map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", values.join(" "));
    }
    s
}

pub fn decode_model(text: &str) -> Result<ClassifierModel> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(' ').collect();
    if header.len() != 4 || header[0] != MODEL_MAGIC {
        return Err(Error::format(format!("expected `{MODEL_MAGIC} <C> <F> <version>` header"), Some(1)));
    }
    let classes: usize = header[1].parse().map_err(|_| Error::format("bad class count", Some(1)))?;
    let features: usize = header[2].parse().map_err(|_| Error::format("bad feature count", Some(1)))?;
    let mut model = ClassifierModel::zeros(classes, features);
    model.feature_spec_version = header[3].to_string();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if rows == classes {
            return Err(Error::format("more rows than classes", Some(lineno)));
        }
        let v: Vec<f64> = line
            .split(' ')
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::format("non-numeric or non-finite parameter", Some(lineno)))?;
        if v.len() != features + 1 {
            return Err(Error::format(format!("expected {} values, found {}", features + 1, v.len()), Some(lineno)));
        }
        model.weights[rows * features..(rows + 1) * features].copy_from_slice(&v[..features]);
        model.bias[rows] = v[features];
        rows += 1;
    }
    if rows != classes {
        return Err(Error::format(format!("expected {classes} rows, found {rows}"), None));
    }
    Ok(model)
}

pub fn write_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    write_atomic(path, encode_model(model).as_bytes())
}

/// Load a model and check it against the current featurizer.
pub fn read_model(path: &Path) -> Result<ClassifierModel> {
    let model = decode_model(&std::fs::read_to_string(path).at(path)?)?;
    if model.features != FEATURE_DIM || model.feature_spec_version != FEATURE_SPEC_VERSION {
        return Err(Error::invalid(format!(
            "model was trained for features {} ({}), this build produces {} ({})",
            model.feature_spec_version, model.features, FEATURE_SPEC_VERSION, FEATURE_DIM
        )));
    }
    if model.classes != GestureClass::COUNT {
        return Err(Error::invalid(format!("model has {} classes", model.classes)));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform_and_picks_first_name() {
        let m = ClassifierModel::zeros(GestureClass::COUNT, FEATURE_DIM);
        let (label, p) = classify(&m, &[0.3; FEATURE_DIM]).unwrap();
        assert_eq!(label, GestureClass::AdvanceLeft);
        assert!(p.iter().all(|&v| (v - 1.0 / 11.0).abs() < 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let m = ClassifierModel::zeros(GestureClass::COUNT, FEATURE_DIM);
        assert!(matches!(classify(&m, &[0.0; 3]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![vec![1.0], vec![2.0]];
        assert!(train_on_features(&xs, &[0, 0], 2, &TrainParams::default()).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let mut m = ClassifierModel::zeros(2, 3);
        m.weights = vec![0.1, -2.5, 1e-17, 3.0, 0.0, -0.333];
        m.bias = vec![0.25, -1.0];
        let text = encode_model(&m);
        assert!(text.starts_with("GLM1 2 3 pose22-v1\n"));
        assert_eq!(decode_model(&text).unwrap(), m);
        assert!(decode_model("GLM1 2 3 v\n1 2 3 4\n").is_err());
    }

    #[test]
    fn loss_decreases() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.2], vec![0.1, 1.0]];
        let ys = vec![0, 1, 0, 1];
        let (_, report) = train_on_features(&xs, &ys, 2, &TrainParams::default()).unwrap();
        assert!(report.losses.windows(2).all(|w| w[1] <= w[0]));
    }
}
