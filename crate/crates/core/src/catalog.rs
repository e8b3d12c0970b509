//! Ready-made Itô systems used by the tests, the command line and the demo.

use crate::dsl::parse_system;
use crate::model::ItoSystem;

fn build(src: &str) -> ItoSystem {
    parse_system(src).expect("catalog systems are well formed")
}

/// `dx = s0 dw`: free particle with constant noise.
pub fn heat() -> ItoSystem {
    build("system heat\nparams s0 : nonzero\nvars x\nnoises w1\nsigma x w1 = s0\n")
}

/// Damped particle whose Fokker–Planck equation is the Kramers equation.
pub fn kramers() -> ItoSystem {
    build(
        "system kramers\nparams k : positive\nvars x y\nnoises w1\n\
         drift x = y\ndrift y = -k^2*y\nsigma y w1 = sqrt(2*k^2)\n",
    )
}

/// The Kramers system driven by two noises, the second of which is idle,
/// so that noise rotations are available to W-symmetries.
pub fn kramers_two_noise() -> ItoSystem {
    build(
        "system kramers2\nparams k : positive\nvars x y\nnoises w1 w2\n\
         drift x = y\ndrift y = -k^2*y\nsigma y w1 = sqrt(2*k^2)\n",
    )
}

/// Driftless motion with a noise matrix rotating in time.
pub fn rotating() -> ItoSystem {
    build(
        "system rotating\nvars x y\nnoises w1 w2\n\
         sigma x w1 = cos(t)\nsigma x w2 = -sin(t)\nsigma y w1 = sin(t)\nsigma y w2 = cos(t)\n",
    )
}

/// `dx = dw` in `n` dimensions.
pub fn wiener(n: usize) -> ItoSystem {
    let mut src = format!("system wiener{n}\nvars");
    for i in 1..=n {
        src.push_str(&format!(" x{i}"));
    }
    src.push_str("\nnoises");
    for i in 1..=n {
        src.push_str(&format!(" w{i}"));
    }
    src.push('\n');
    for i in 1..=n {
        src.push_str(&format!("sigma x{i} w{i} = 1\n"));
    }
    build(&src)
}

/// `n` uncoupled oscillators `dx^i = -x^i dt + sqrt(2 s_i) dw^i`.
pub fn langevin(n: usize) -> ItoSystem {
    let mut src = format!("system langevin{n}\nparams");
    for i in 1..=n {
        src.push_str(&format!(" s{i}"));
    }
    src.push_str(" : positive\nvars");
    for i in 1..=n {
        src.push_str(&format!(" x{i}"));
    }
    src.push_str("\nnoises");
    for i in 1..=n {
        src.push_str(&format!(" w{i}"));
    }
    src.push('\n');
    for i in 1..=n {
        src.push_str(&format!("drift x{i} = -x{i}\nsigma x{i} w{i} = sqrt(2*s{i})\n"));
    }
    build(&src)
}

/// `dx^i = -(1 - lambda |x|^2) x^i dt + dw^i`.
pub fn norm_coupled(n: usize) -> ItoSystem {
    let norm: Vec<String> = (1..=n).map(|i| format!("x{i}^2")).collect();
    let norm = norm.join(" + ");
    let mut src = format!("system norm{n}\nparams lambda : nonzero\nvars");
    for i in 1..=n {
        src.push_str(&format!(" x{i}"));
    }
    src.push_str("\nnoises");
    for i in 1..=n {
        src.push_str(&format!(" w{i}"));
    }
    src.push('\n');
    for i in 1..=n {
        src.push_str(&format!("drift x{i} = -(1 - lambda*({norm}))*x{i}\nsigma x{i} w{i} = 1\n"));
    }
    build(&src)
}

/// Looks a system up by name; `langevin3`, `norm2`, `wiener2` carry their
/// dimension in the name.
pub fn by_name(name: &str) -> Option<ItoSystem> {
    let dim = |prefix: &str| name.strip_prefix(prefix).and_then(|d| d.parse::<usize>().ok()).filter(|&d| d >= 1);
    match name {
        "heat" => Some(heat()),
        "kramers" => Some(kramers()),
        "kramers2" => Some(kramers_two_noise()),
        "rotating" => Some(rotating()),
        _ => dim("langevin")
            .map(langevin)
            .or_else(|| dim("norm").map(norm_coupled))
            .or_else(|| dim("wiener").map(wiener)),
    }
}
