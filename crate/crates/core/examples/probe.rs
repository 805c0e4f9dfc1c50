use probit_ep::data::{Group, Observation};
use probit_ep::ep::{ep_best_predict, ep_group_loop, ep_start_site, EpOptions, SweepMode};
use probit_ep::linalg::SymMat;
use probit_ep::oracles::{aghq_posterior_moments, laplace_group};
use probit_ep::special::std_normal_cdf;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let beta = [0.0, 1.0];
    let sigma = SymMat::from_vech(vec![1.0]).unwrap();
    let opts = EpOptions { tol: 1e-10, max_iter: 500, sweep: SweepMode::FreshCavity };
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut rows: Vec<(f64, usize, f64, f64)> = Vec::new();
    for _ in 0..100 {
        let u_true: f64 = rng.sample(StandardNormal);
        let obs: Vec<Observation> = (0..25)
            .map(|_| {
                let x = rng.gen::<f64>();
                let lin = beta[0] + beta[1] * x + u_true;
                Observation {
                    y: u8::from(rng.gen::<f64>() < std_normal_cdf(lin)),
                    x_f: vec![1.0, x],
                    x_r: vec![1.0],
                }
            })
            .collect();
        let ones = obs.iter().filter(|o| o.y == 1).count();
        let g = Group { label: "g".into(), obs };
        let u_hat = laplace_group(&g, &beta, &sigma).unwrap().mode;
        let starts: Vec<_> = g.obs.iter().map(|o| ep_start_site(o.y, &o.x_f, &o.x_r, &beta, &u_hat)).collect();
        let st = ep_group_loop(&g, &beta, &sigma, &starts, &opts).unwrap();
        let (u_ep, c_ep) = ep_best_predict(&st).unwrap();
        let (u_q, c_q) = aghq_posterior_moments(&g, &beta, &sigma, 150).unwrap();
        let var_gap = ((c_ep.get(0, 0) - c_q.get(0, 0)) / c_q.get(0, 0)).abs();
        rows.push((var_gap, ones, (u_ep[0] - u_q[0]).abs(), c_q.get(0, 0)));
    }
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("worst 8 groups by variance gap:");
    for r in rows.iter().take(8) {
        println!("  var_gap {:.4}  ones {}/25  mean_gap {:.5}  exact_var {:.4}", r.0, r.1, r.2, r.3);
    }
    let over: usize = rows.iter().filter(|r| r.0 > 0.10).count();
    println!("groups over 10%: {over}/100");
}
