//! The full command-line pipeline driven in-process: simulate, train, generate,
//! evaluate and account, all writing into one directory.
//!
//! ```text
//! cargo run --release --example cli_pipeline -- [out_dir]
//! ```

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/cli_pipeline".into());
    let path = |s: &str| format!("{out}/{s}");
    let steps: [Vec<String>; 5] = [
        vec!["simulate", "--d", "5", "--n", "3000", "--graph", "sf", "--attach", "1", "--seed", "2", "--train-fraction", "0.7", "--out", &path("sim")],
        vec!["train", "--data", &path("sim/train.csv"), "--steps", "2000", "--eta-theta", "0.03", "--eta-nu", "0.1", "--t-g", "1", "--clamp", "0.2", "--epsilon", "4", "--seed", "2", "--out", &path("train")],
        vec!["generate", "--model", &path("train/checkpoint.json"), "--preprocessor", &path("train/preprocessor.json"), "--n", "900", "--seed", "3", "--out", &path("gen")],
        vec!["evaluate", "--synthetic", &path("gen/synthetic.csv"), "--test", &path("sim/test.csv"), "--target", "x5", "--out", &path("eval")],
        vec!["account", "--n", "2100", "--batch", "50", "--sigma", "1.0", "--steps", "2000"],
    ]
    .map(|v| v.into_iter().map(String::from).collect());

    for args in steps {
        println!("$ prada {}", args.join(" "));
        let code = prada::cli::main_with_code(std::iter::once("prada".to_string()).chain(args));
        if code != 0 {
            std::process::exit(code);
        }
    }
    let metrics = std::fs::read_to_string(path("eval/metrics.json")).expect("metrics written");
    println!("{metrics}");
}
