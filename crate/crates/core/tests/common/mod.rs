#![allow(dead_code)]

use gridctl::grid::{AreaMember, InterAreaSpec, LineLimits, Scenario};
use gridctl::testing::{generator, line, load, scenario};
use proptest::prelude::*;

/// Multiple of 1/16 in `[lo, hi]`, so rational and float runs see the
/// same numbers.
pub fn sixteenths(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    ((lo * 16.0) as i32..=(hi * 16.0) as i32).prop_map(|k| k as f64 / 16.0)
}

#[derive(Clone, Debug)]
pub struct Shape {
    pub is_gen: Vec<bool>,
    pub parents: Vec<usize>,
    pub extra: Vec<(usize, usize)>,
}

fn shape() -> impl Strategy<Value = Shape> {
    (2usize..=6).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            (1..n).map(|i| 0..i).collect::<Vec<_>>(),
            proptest::collection::vec((0..n, 0..n), 0..3),
        )
            .prop_map(|(mut is_gen, parents, extra)| {
                is_gen[0] = true;
                Shape {
                    is_gen,
                    parents,
                    extra,
                }
            })
    })
}

/// Random connected network with mixed bus kinds, optional line limits, an
/// optional inter-area constraint and a random disturbance.
pub fn arb_scenario() -> impl Strategy<Value = Scenario> {
    shape()
        .prop_flat_map(|sh| {
            let n = sh.is_gen.len();
            let mut edges: Vec<(usize, usize)> = sh
                .parents
                .iter()
                .enumerate()
                .map(|(i, &p)| (p, i + 1))
                .collect();
            for &(a, b) in &sh.extra {
                if a != b
                    && !edges
                        .iter()
                        .any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
                {
                    edges.push((a, b));
                }
            }
            let m = edges.len();
            (
                Just(sh),
                Just(edges),
                proptest::collection::vec(sixteenths(0.5, 4.0), m),
                proptest::collection::vec(
                    proptest::option::weighted(0.3, sixteenths(0.0625, 1.0)),
                    m,
                ),
                proptest::collection::vec(sixteenths(-0.5, 0.5), n),
                proptest::collection::vec(
                    (
                        sixteenths(0.125, 1.0),
                        sixteenths(0.125, 1.0),
                        sixteenths(0.5, 2.0),
                    ),
                    n,
                ),
                proptest::option::weighted(0.3, 0..m),
            )
        })
        .prop_map(|(sh, edges, bs, limits, pd, ctl, area)| {
            let buses = sh
                .is_gen
                .iter()
                .enumerate()
                .map(|(i, &g)| {
                    let mut b = if g {
                        generator(i + 1, 4.0 + i as f64)
                    } else {
                        load(i + 1)
                    };
                    b.control.min = -ctl[i].0;
                    b.control.max = ctl[i].1;
                    b.control.weight = ctl[i].2;
                    b
                })
                .collect();
            let lines = edges
                .iter()
                .zip(&bs)
                .zip(&limits)
                .map(|((&(f, t), &b), lim)| {
                    let mut l = line(f, t, b);
                    if let Some(p) = lim {
                        l.limits = LineLimits::symmetric(*p);
                    }
                    l
                })
                .collect();
            let mut s = scenario(buses, lines);
            s.disturbance = pd;
            if let Some(j) = area {
                s.network.areas.push(InterAreaSpec {
                    members: vec![AreaMember { line: j, sign: 1 }],
                    psi: 0.0,
                });
            }
            s
        })
}
