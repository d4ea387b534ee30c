//! The PSP kernel, the S-PSP between two spike trains and the α̂ ratio.
//!
//! cargo run --example kernel_and_spsp

use hm2bp::spsp::{alpha_hat, psp_kernel, spsp};
use hm2bp::{NeuronParams, SpikeTrain};

fn main() -> hm2bp::Result<()> {
    let params = NeuronParams::new(8.0, 2.0, 1.0)?;
    println!("kernel eps(s, t) for tau_m = 8, tau_s = 2");
    println!("{:>6} {:>10} {:>10} {:>10}", "t", "s=2", "s=4", "s=16");
    for t in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        println!(
            "{t:>6.1} {:>10.5} {:>10.5} {:>10.5}",
            psp_kernel(2.0, t, &params),
            psp_kernel(4.0, t, &params),
            psp_kernel(16.0, t, &params)
        );
    }

    // One presynaptic train seen by two postsynaptic trains of different rates.
    let pre = SpikeTrain::new(vec![1.0, 6.0, 11.0, 16.0, 21.0, 26.0])?;
    for post in [SpikeTrain::new(vec![9.0, 24.0])?, SpikeTrain::new(vec![4.0, 9.0, 14.0, 19.0, 24.0, 29.0])?] {
        let e = spsp(&pre, &post, &params);
        let (o_pre, o_post) = (pre.times().len() as u32, post.times().len() as u32);
        println!(
            "post with {o_post} spikes: e = {e:.4}, alpha-hat = e / (o_pre o_post) = {:.4}",
            alpha_hat(e, o_pre, o_post)
        );
    }
    Ok(())
}
