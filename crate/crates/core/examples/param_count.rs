use mcr_core::networks::{AblationVariant, build_ablation_variant, Discriminator, Generator, GeneratorConfig, DiscriminatorConfig};

fn main() {
    let base = GeneratorConfig::default();
    for v in AblationVariant::ALL {
        let cfg = build_ablation_variant(&base, v);
        let (_, vs) = Generator::build(&cfg, 0).unwrap();
        println!("{:<12} generator params: {:>12}", v.as_str(), vs.param_count());
    }
    let (_, dvs) = Discriminator::build(&DiscriminatorConfig::default(), 0).unwrap();
    println!("discriminator params: {}", dvs.param_count());
    let (_, gvs) = Generator::build(&base, 0).unwrap();
    let total = gvs.param_count() + dvs.param_count();
    println!("full total: {} ({:+.2}% vs 75.0M)", total, (total as f64 / 75.0e6 - 1.0) * 100.0);
}
