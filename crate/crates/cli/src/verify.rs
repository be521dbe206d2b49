//! Fast self-check of the numerical building blocks, for sanity-checking an
//! installation without pulling in the full test suite.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use agf_core::bsc::{combine, csc_combine, CscMode, VectorSet, VectorSetKind};
use agf_core::channel::draw_channel;
use agf_core::fec::{conv_encode, crc16, FecCodec};
use agf_core::results::wilson_interval;
use agf_core::waveform::{
    spread_symbols, ChipGrid, PoolSpec, PreamblePool, SpreadingCodePool,
};

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

/// Run every check, print one line each, and return overall success.
pub fn run_all() -> bool {
    let checks = vec![
        crc_vectors(),
        conv_impulse(),
        codec_roundtrip(),
        collision_separation(),
        zero_forcing(),
        pool_properties(),
        preamble_orthogonality(),
        wilson_zero(),
    ];
    let mut ok = true;
    for c in &checks {
        println!(
            "{} {:<32} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.pass;
    }
    println!(
        "{}: {}/{} checks passed",
        if ok { "OK" } else { "FAILED" },
        checks.iter().filter(|c| c.pass).count(),
        checks.len()
    );
    ok
}

fn crc_vectors() -> Check {
    let a5: Vec<u8> = [1u8, 0, 1, 0, 0, 1, 0, 1]
        .iter()
        .cycle()
        .take(68)
        .copied()
        .collect();
    let got = crc16(&a5);
    check(
        "crc16 reference vector",
        got == 0x9707 && crc16(&vec![0u8; 68]) == 0,
        format!("crc(0xA5 x 68 bits) = {got:#06x}"),
    )
}

fn conv_impulse() -> Check {
    let mut input = vec![0u8; 7];
    input[0] = 1;
    let coded = conv_encode(&input);
    let expect = [1u8, 1, 0, 1, 1, 1, 1, 1, 0, 0, 1, 0, 1, 1];
    check(
        "convolutional impulse response",
        coded[..14] == expect,
        format!("first 14 bits {:?}", &coded[..14]),
    )
}

fn codec_roundtrip() -> Check {
    let codec = match FecCodec::new(68, 167) {
        Ok(c) => c,
        Err(e) => return check("fec round trip", false, e.to_string()),
    };
    let info: Vec<u8> = (0..68).map(|i| (i % 3 == 0) as u8).collect();
    let result = codec
        .attach_crc(&info)
        .and_then(|tb| codec.encode(&tb))
        .and_then(|coded| {
            let llrs: Vec<f64> =
                coded.iter().map(|&b| if b == 0 { 1.0 } else { -1.0 }).collect();
            codec.decode(&llrs)
        });
    match result {
        Ok(out) => check(
            "fec round trip",
            out.crc_pass && codec.info_bits(&out.block) == info,
            "68 info bits through 167 coded bits".into(),
        ),
        Err(e) => check("fec round trip", false, e.to_string()),
    }
}

fn collision_separation() -> Check {
    // Channels [1,1] and [1,-1]: sum and difference combiners isolate the
    // two users exactly.
    let code = [
        Complex64::new(0.5, 0.0),
        Complex64::new(0.0, 0.5),
        Complex64::new(-0.5, 0.0),
        Complex64::new(0.0, -0.5),
    ];
    let s1 = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
    let s2 = [Complex64::new(-1.0, 0.0), Complex64::new(-1.0, 0.0)];
    let x1 = spread_symbols(&s1, &code);
    let x2 = spread_symbols(&s2, &code);
    let mut y0 = ChipGrid::zeros(4, 2);
    y0.add_scaled(&x1, Complex64::new(1.0, 0.0));
    y0.add_scaled(&x2, Complex64::new(1.0, 0.0));
    let mut y1 = ChipGrid::zeros(4, 2);
    y1.add_scaled(&x1, Complex64::new(1.0, 0.0));
    y1.add_scaled(&x2, Complex64::new(-1.0, 0.0));
    let set = VectorSet::builtin(VectorSetKind::V2Of6);
    let z = match combine(&[y0, y1], set.vector(2)) {
        Ok(z) => z,
        Err(e) => return check("collision separation", false, e.to_string()),
    };
    let mut leak = z;
    leak.sub_scaled(&x1, Complex64::new(2.0f64.sqrt(), 0.0));
    let residual = leak.norm_sqr().sqrt();
    check(
        "collision separation",
        residual < 1e-10,
        format!("residual {residual:.2e}"),
    )
}

fn zero_forcing() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let hs: Vec<Vec<Complex64>> = (0..2).map(|_| draw_channel(&mut rng, 2)).collect();
    let v = match csc_combine(&hs, 0, CscMode::Zfc) {
        Ok(v) => v,
        Err(e) => return check("zero-forcing null", false, e.to_string()),
    };
    let leak: Complex64 = v.iter().zip(&hs[1]).map(|(a, b)| a.conj() * b).sum();
    check(
        "zero-forcing null",
        leak.norm() < 1e-9,
        format!("interferer leak {:.2e}", leak.norm()),
    )
}

fn pool_properties() -> Check {
    let pool = match SpreadingCodePool::build_pool(&PoolSpec {
        pool_size: 64,
        spread_len: 4,
        seed: 7,
    }) {
        Ok(p) => p,
        Err(e) => return check("spreading pool", false, e.to_string()),
    };
    let mut worst: f64 = 0.0;
    for i in 0..pool.len() {
        let norm: f64 = pool.code(i).iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return check("spreading pool", false, format!("code {i} norm {norm}"));
        }
        for j in (i + 1)..pool.len() {
            let corr: Complex64 = pool
                .code(i)
                .iter()
                .zip(pool.code(j))
                .map(|(a, b)| a.conj() * b)
                .sum();
            worst = worst.max(corr.norm());
        }
    }
    check(
        "spreading pool",
        worst < 1.0 - 1e-9,
        format!("64 unit-norm codes, max |corr| {worst:.4}"),
    )
}

fn preamble_orthogonality() -> Check {
    let pool = match PreamblePool::new(8, 336) {
        Ok(p) => p,
        Err(e) => return check("preamble orthogonality", false, e.to_string()),
    };
    let mut worst: f64 = 0.0;
    for q in 0..pool.len() {
        for r in 0..pool.len() {
            let g: Complex64 = pool
                .seq(q)
                .iter()
                .zip(pool.seq(r))
                .map(|(a, b)| a.conj() * b)
                .sum();
            let expect = if q == r { 1.0 } else { 0.0 };
            worst = worst.max((g.norm() - expect).abs());
        }
    }
    check(
        "preamble orthogonality",
        worst < 1e-9,
        format!("max gram deviation {worst:.2e}"),
    )
}

fn wilson_zero() -> Check {
    let (lo, hi) = wilson_interval(0, 1000, 1.96);
    check(
        "wilson interval identities",
        lo == 0.0 && hi > 0.0 && hi < 0.01,
        format!("0/1000 -> [{lo}, {hi:.4}]"),
    )
}
