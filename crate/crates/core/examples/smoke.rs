use probit_ep::mle::{optimize, FitConfig, FitMethod};
use probit_ep::sim::{simulate_stream, SimConfig};

fn main() {
    // study-1 style fit
    let config = SimConfig::study1(123);
    let data = simulate_stream(&config, 1).unwrap();
    let t0 = std::time::Instant::now();
    let fit = optimize(&data, &FitConfig::default()).unwrap();
    println!("study1 EP fit in {:.2?}", t0.elapsed());
    println!("  beta_hat = {:?}", fit.beta_hat);
    println!("  sigma_hat = {:?}", fit.sigma_hat.vech());
    println!("  loglik = {}", fit.loglik);
    println!("  diag: {:?}", fit.diagnostics);
    for r in &fit.ci.rows {
        println!("  {}: ({:?}, {:.4}, {:?})", r.name, r.lower, r.estimate, r.upper);
    }
    let t0 = std::time::Instant::now();
    let lap = optimize(&data, &FitConfig { method: FitMethod::Laplace, ..FitConfig::default() }).unwrap();
    println!("study1 Laplace fit in {:.2?}: beta {:?} sigma {:?}", t0.elapsed(), lap.beta_hat, lap.sigma_hat.vech());
    let t0 = std::time::Instant::now();
    let agh = optimize(&data, &FitConfig { method: FitMethod::Aghq { order: 100 }, ..FitConfig::default() }).unwrap();
    println!("study1 AGHQ fit in {:.2?}: beta {:?} sigma {:?}", t0.elapsed(), agh.beta_hat, agh.sigma_hat.vech());

    // study-2 style fit at desk scale
    let config2 = SimConfig::study2(50, 7);
    let data2 = simulate_stream(&config2, 1).unwrap();
    let t0 = std::time::Instant::now();
    let fit2 = optimize(&data2, &FitConfig::default()).unwrap();
    println!("study2 (m=50) EP fit in {:.2?}", t0.elapsed());
    println!("  beta_hat = {:?}", fit2.beta_hat);
    println!("  sigma_hat rows = {:?}", fit2.sigma_hat.to_rows());
    println!("  diag2: {:?}", fit2.diagnostics);
    for r in &fit2.ci.rows {
        println!("  {}: ({:?}, {:.4}, {:?})", r.name, r.lower, r.estimate, r.upper);
    }
}
