//! The three bundled text environments, driven by hand and by their oracle
//! scripts.
//!
//! cargo run --example environments

use hicrl::envs::{bundled_pack, make_env, run_oracle, EnvId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for env in EnvId::ALL {
        let pack = bundled_pack(env);
        let s = &pack.scenarios[0];
        println!(
            "== {env}: {} scenarios, step cap {} ==",
            pack.scenarios.len(),
            env.default_max_steps()
        );
        let mut e = make_env(env);
        println!("{}", e.reset(s)?);
        let r = e.step("this is not a command")?;
        println!("> this is not a command\n{}", r.observation);

        let run = run_oracle(s)?;
        for (action, obs) in &run.transcript {
            println!("> {action}\n{obs}");
        }
        println!("oracle: success={} in {} steps\n", run.success, run.steps);
    }

    let mut solved = 0;
    let mut total = 0;
    for env in EnvId::ALL {
        for s in &bundled_pack(env).scenarios {
            total += 1;
            solved += usize::from(run_oracle(s)?.success);
        }
    }
    println!("{solved} of {total} bundled scenarios solved by their oracle scripts");
    Ok(())
}
