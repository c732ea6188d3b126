mod common;

use common::{rng, uniform};
use emiff::geometry::{CameraParams, Intrinsics};
use emiff::link::*;
use emiff::model::{fc_compress, Bindings, ModelConfig};
use emiff::{Error, Graph, Tensor};
use nalgebra::Vector3;
use rand::Rng;

fn cam() -> CameraParams {
    let intr = Intrinsics {
        fx: 64.0,
        fy: 64.0,
        cx: 64.0,
        cy: 32.0,
    };
    CameraParams::look_at(Vector3::new(18.0, -16.0, 7.0), Vector3::new(18.0, 0.0, 0.0), intr, 0.05).unwrap()
}

fn f32_value(r: &mut impl Rng) -> f32 {
    match r.random_range(0..10) {
        0 => f32::from_bits(r.random_range(1..0x0080_0000)), // subnormal
        1 => [0.0, -0.0, f32::INFINITY, f32::NEG_INFINITY, f32::MAX, f32::MIN_POSITIVE][r.random_range(0..6)],
        _ => f32::from_bits(r.random::<u32>() & 0x7f7f_ffff | (r.random::<u32>() & 0x8000_0000)),
    }
}

#[test]
fn fuzzed_f32_roundtrip_is_bit_exact() {
    let mut r = rng(1);
    let c = cam();
    for _ in 0..1000 {
        let rank = r.random_range(1..=4);
        let shape: Vec<usize> = (0..rank).map(|_| r.random_range(1..6)).collect();
        let n: usize = shape.iter().product();
        let vals: Vec<f32> = (0..n).map(|_| f32_value(&mut r)).collect();
        let t = Tensor::new(&shape, vals.iter().map(|&v| v as f64).collect()).unwrap();
        let (ccr, scr) = (r.random(), r.random());
        let p = serialize(&t, &c, ccr, scr, WireDtype::F32).unwrap();
        assert_eq!(p.len(), HEADER_LEN + 4 * n);
        let d = deserialize(&p).unwrap();
        assert_eq!(d.tensor.shape(), shape.as_slice());
        let back: Vec<u32> = d.tensor.data().iter().map(|&v| (v as f32).to_bits()).collect();
        assert_eq!(back, vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!((d.ccr, d.scr, d.dtype), (ccr, scr, WireDtype::F32));
        assert_eq!(d.camera.capture_time, c.capture_time);
    }
}

fn field(e: Error) -> &'static str {
    match e {
        Error::Protocol { field, .. } => field,
        other => panic!("expected protocol error, got {other}"),
    }
}

#[test]
fn corruption_names_the_failing_field() {
    let t = uniform(&[2, 3, 4], -1.0, 1.0, &mut rng(2));
    let good = serialize(&t, &cam(), 2, 4, WireDtype::F32).unwrap().into_bytes();
    let bad = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = good.clone();
        f(&mut b);
        field(deserialize(&Packet::from_bytes(b)).unwrap_err())
    };
    assert_eq!(bad(&|b| b[0] = b'X'), "magic");
    assert_eq!(bad(&|b| b[4] = 9), "version");
    assert_eq!(bad(&|b| b.truncate(b.len() - 1)), "length");
    assert_eq!(bad(&|b| b.push(0)), "length");
    assert_eq!(bad(&|b| b.truncate(50)), "length");
    assert_eq!(bad(&|b| b[6] = 7), "dtype");
    assert_eq!(bad(&|b| b[7] = 0), "rank");
    assert_eq!(bad(&|b| b[20] = 1), "shape");
    // rotation entry blown up
    assert_eq!(bad(&|b| b[28..32].copy_from_slice(&5.0f32.to_le_bytes())), "camera");
}

#[test]
fn payload_shrinks_exactly_with_rate_product() {
    let cfg = ModelConfig::default();
    let ccrs = [1, 2, 4, 8, 16, 32, 64];
    let scrs = [1, 4, 16, 64, 256];
    let rates: Vec<(usize, usize)> = ccrs.iter().flat_map(|&c| scrs.iter().map(move |&s| (c, s))).collect();
    let p = cfg.init_params(&rates, 3).unwrap();
    let mut g = Graph::inference();
    let b = Bindings::bind(&mut g, &p);
    let f0 = g.constant(uniform(&[64, 16, 16], -1.0, 1.0, &mut rng(3)));
    let base_bytes = 64 * 16 * 16 * 4;
    let c = cam();
    let mut seen_extreme = false;
    for (ccr, scr) in rates {
        let ft = fc_compress(&mut g, &b, &cfg, f0, ccr, scr).unwrap();
        let pk = serialize(g.value(ft), &c, ccr as u16, scr as u16, WireDtype::F32).unwrap();
        assert_eq!(pk.payload_len() * ccr * scr, base_bytes, "ccr {ccr} scr {scr}");
        assert_eq!(pk.payload_len(), base_bytes / (ccr * scr));
        seen_extreme |= ccr * scr == 16384;
    }
    assert!(seen_extreme);
}

#[test]
fn f16_halves_the_payload() {
    let t = uniform(&[4, 8, 8], -1.0, 1.0, &mut rng(4));
    let a = serialize(&t, &cam(), 1, 1, WireDtype::F32).unwrap();
    let b = serialize(&t, &cam(), 1, 1, WireDtype::F16).unwrap();
    assert_eq!(a.payload_len(), 2 * b.payload_len());
    let d = deserialize(&b).unwrap();
    assert!(d.tensor.max_abs_diff(&t) < 1e-3);
}

#[test]
fn link_delay_is_latency_plus_size_over_bandwidth() {
    let t = Tensor::zeros(&[10]);
    let p = serialize(&t, &cam(), 1, 1, WireDtype::F32).unwrap();
    let link = LinkConfig {
        bandwidth: 1e6,
        latency: 0.02,
        seed: 0,
    };
    let d = transmit(&p, &link).unwrap();
    assert_eq!(d.serialization_delay, 8.0 * 160.0 / 1e6);
    assert_eq!(d.arrival_delay, 0.02 + 8.0 * 160.0 / 1e6);
    assert_eq!(transmit(&p, &link).unwrap(), d);
    let bad = LinkConfig {
        bandwidth: 0.0,
        ..link
    };
    assert!(matches!(transmit(&p, &bad), Err(Error::Config(_))));
}
