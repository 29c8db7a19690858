//! Checks the analytic generator and critic gradients against central finite
//! differences on random models.

use prada::model::{
    discriminator_per_example_grad, generator_grad, penalized_objective, Discriminator, PenaltySchedule,
    SequentialGenerator, DEFAULT_HIDDEN,
};
use prada::nn::grad_check;
use prada::train::sample_noise;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> prada::Result<()> {
    let sched = PenaltySchedule::new(0.05, 0.5)?;
    for d in [2, 3, 5, 8] {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let g = SequentialGenerator::init(d, DEFAULT_HIDDEN, &mut rng);
        let f = Discriminator::init(d, 1.0, &mut rng)?;
        let xs = sample_noise(8, d, &mut rng);
        let zs = sample_noise(8, d, &mut rng);

        let analytic = generator_grad(&f, &g, &zs, &sched)?;
        let gen_err = grad_check(
            |p| {
                let mut h = g.clone();
                h.set_params(p)?;
                penalized_objective(&f, &h, &xs, &zs, &sched)
            },
            &analytic,
            &g.params(),
            1e-6,
        )?;

        let analytic = discriminator_per_example_grad(&f, &g, &xs[0], &zs[0])?.grad;
        let fake = g.sample(&zs[0])?;
        let critic_err = grad_check(
            |p| {
                let mut h = f.clone();
                h.set_params(p)?;
                Ok(h.forward(&fake)? - h.forward(&xs[0])?)
            },
            &analytic,
            &f.params(),
            1e-6,
        )?;
        println!(
            "d = {d}: {} generator params, error {gen_err:.2e}; {} critic params, error {critic_err:.2e}",
            g.num_params(),
            f.num_params()
        );
    }
    Ok(())
}
