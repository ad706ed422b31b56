use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use cartographer_core::gesture::{
    classify, encode_event, encode_pose_stream, evaluate, featurize, generate_synthetic_corpus, parse_frame_line,
    parse_pose_stream, read_model, split_corpus, train_classifier, write_model, GestureClass, GestureEngine,
    MachineConfig, MachineState, PoseFrame, SyntheticConfig, TrainParams,
};
use cartographer_core::ingest::write_atomic;

use crate::{usage, Failure};

#[derive(Args)]
pub struct TrainArgs {
    /// Labeled pose stream.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled pose stream.
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    /// Pose stream file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    stream: String,
    /// Also send each event to a running server's websocket, e.g.
    /// `ws://127.0.0.1:8080/ws/events`.
    #[arg(long)]
    publish: Option<String>,
    /// Write per-frame sonification parameters here.
    #[arg(long)]
    sonify: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    buffer: usize,
    /// Seconds between repeats of a held discrete gesture.
    #[arg(long, default_value_t = 0.7)]
    rate_limit: f64,
    #[arg(long, default_value_t = 0.4)]
    cursor_alpha: f64,
    /// Image-space box mapped to the screen: `x0,y0,x1,y1`.
    #[arg(long, default_value = "0.1,0.1,0.9,0.9", value_parser = parse_box)]
    calibration: [f64; 4],
}

fn parse_box(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        &[x0, y0, x1, y1] if x1 > x0 && y1 > y0 => Ok([x0, y0, x1, y1]),
        _ => Err("expected x0,y0,x1,y1 with x1 > x0 and y1 > y0".into()),
    }
}

fn labeled_corpus(path: &PathBuf) -> Result<Vec<(PoseFrame, GestureClass)>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_pose_stream(&text)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| match f.label {
            Some(label) => Ok((f.frame, label)),
            None => Err(usage(format!("frame {} of {} has no label", i + 1, path.display()))),
        })
        .collect()
}

fn write_labeled(path: &Path, frames: &[(PoseFrame, GestureClass)]) -> Result<(), Failure> {
    let text = encode_pose_stream(frames.iter().map(|(f, l)| (f, Some(*l))));
    write_atomic(path, text.as_bytes())?;
    println!("wrote {} labeled frames to {}", frames.len(), path.display());
    Ok(())
}

/// Synthetic labeled corpus, optionally split 80/20 per class.
pub fn write_synthetic(seed: u64, per_class: usize, path: &Path, holdout: Option<&Path>) -> Result<(), Failure> {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(seed, per_class));
    match holdout {
        Some(test_path) => {
            let (train, test) = split_corpus(&corpus, 0.8);
            write_labeled(path, &train)?;
            write_labeled(test_path, &test)
        }
        None => write_labeled(path, &corpus),
    }
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let corpus = labeled_corpus(&a.corpus)?;
    let params = TrainParams {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        l2: a.l2,
        seed: a.seed,
        ..TrainParams::default()
    };
    let (model, report) = train_classifier(&corpus, &params)?;
    write_model(&model, &a.out)?;
    println!(
        "trained on {} frames: final loss {:.6}, training accuracy {:.4}, {} learning-rate halvings",
        corpus.len(),
        report.losses.last().copied().unwrap_or(f64::NAN),
        evaluate(&model, &corpus)?,
        report.halvings
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let model = read_model(&a.model)?;
    let corpus = labeled_corpus(&a.corpus)?;
    let mut confusion = [[0usize; GestureClass::COUNT]; GestureClass::COUNT];
    let mut unusable = 0;
    for (frame, label) in &corpus {
        match featurize(frame) {
            Ok(f) => confusion[label.index()][classify(&model, &f)?.0.index()] += 1,
            Err(_) => unusable += 1,
        }
    }
    println!("accuracy {:.4} over {} frames ({unusable} unusable)", evaluate(&model, &corpus)?, corpus.len());
    for class in GestureClass::ALL {
        let row = &confusion[class.index()];
        let total: usize = row.iter().sum();
        if total > 0 {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            println!("{class}\t{:.4}\t{}", row[class.index()] as f64 / total as f64, cells.join(" "));
        }
    }
    Ok(())
}

type Socket = tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>;

pub fn run(a: RunArgs) -> Result<(), Failure> {
    let model = read_model(&a.model)?;
    let config = MachineConfig {
        buffer_len: a.buffer,
        rate_limit: a.rate_limit,
        cursor_alpha: a.cursor_alpha,
        calibration: a.calibration,
        ..MachineConfig::default()
    };
    let engine = GestureEngine::new(&model, config);
    let mut state = MachineState::default();

    let input: Box<dyn BufRead> = if a.stream == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let f = File::open(&a.stream).map_err(|e| usage(format!("cannot open {}: {e}", a.stream)))?;
        Box::new(BufReader::new(f))
    };
    let mut socket: Option<Socket> = match &a.publish {
        Some(url) => {
            let (ws, _) = tungstenite::connect(url.as_str())
                .map_err(|e| Failure::Stage(format!("cannot connect to {url}: {e}")))?;
            Some(ws)
        }
        None => None,
    };
    let mut sonify = match &a.sonify {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();

    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let frame = parse_frame_line(&line, n + 1)?.frame;
        let step = engine.step(&mut state, &frame)?;
        for event in &step.events {
            let text = encode_event(event);
            writeln!(out, "{text}")?;
            if let Some(ws) = socket.as_mut() {
                ws.send(tungstenite::Message::Text(text.into()))
                    .map_err(|e| Failure::Stage(format!("publishing failed: {e}")))?;
            }
        }
        out.flush()?;
        if let Some(w) = sonify.as_mut() {
            let s = step.sonify;
            writeln!(w, "{:.6}\t{:.6}\t{:.6}\t{}", frame.timestamp, s.gain, s.pitch, s.texture_index)?;
        }
    }
    if let Some(mut ws) = socket {
        let _ = ws.close(None);
        // Drain until the server acknowledges the close.
        while ws.read().is_ok() {}
    }
    if let Some(mut w) = sonify {
        w.flush()?;
    }
    Ok(())
}
