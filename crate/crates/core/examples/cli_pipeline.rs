//! The `decouple` command line driven in-process: solve the heat problem
//! at two resolutions, verify one run and tabulate the refinement.

use decoupling::cli;

fn decouple(args: &[&str]) -> i32 {
    println!("$ decouple {}", args.join(" "));
    cli::run(std::iter::once("decouple").chain(args.iter().copied()))
}

fn main() {
    let root = std::env::temp_dir().join("decouple-cli-pipeline");
    let coarse = root.join("coarse");
    let fine = root.join("fine");
    let (coarse, fine) = (coarse.to_str().unwrap(), fine.to_str().unwrap());
    let table = root.join("table.csv");

    let mut codes = vec![
        decouple(&["solve", "--problem", "heat", "--spacing", "0.04", "--dt", "4e-3", "--out", coarse]),
        decouple(&["solve", "--problem", "heat", "--spacing", "0.02", "--dt", "2e-3", "--out", fine]),
    ];
    codes.push(decouple(&["verify", coarse, "--paths", "2000"]));
    codes.push(decouple(&["table", coarse, fine, "--out", table.to_str().unwrap()]));
    println!("exit codes {codes:?}; artifacts under {}", root.display());
}
