use crate::channel::{cap_bits, ChannelParams};

use super::search::golden_max;

/// Cut-set bound for relays with unlimited look-ahead.
///
/// The broadcast cut lets destination and relay pool their observations of
/// the source; the multiple-access cut lets source and relay beam-form
/// coherently. Both hold for any relay function of the whole received
/// sequence, so the bound dominates every linear time-invariant scheme.
pub fn cutset_bound(params: &ChannelParams) -> f64 {
    let snr = params.snr();
    let broadcast = (1.0 + params.a.norm_sqr()) * snr;
    let coherent = 1.0 + params.b.norm() * params.gamma.sqrt();
    cap_bits(broadcast.min(coherent * coherent * snr))
}

/// Classical full-duplex cut-set bound, maximized over the source-relay
/// correlation `ρ ∈ [0, 1]`.
///
/// It assumes a causal relay and can sit below the rate of relays that use
/// future samples.
pub fn classical_cutset_bound(params: &ChannelParams) -> f64 {
    let snr = params.snr();
    let a2 = params.a.norm_sqr();
    let b = params.b.norm();
    let g = params.gamma;
    let cut = |rho: f64| {
        let broadcast = (1.0 - rho * rho) * (1.0 + a2) * snr;
        let mac = snr * (1.0 + b * b * g + 2.0 * rho * b * g.sqrt());
        cap_bits(broadcast.min(mac))
    };
    let (_, best) = golden_max(cut, 0.0, 1.0, 1e-12);
    best.max(cut(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::direct_rate;
    use approx::assert_relative_eq;

    #[test]
    fn bound_examples() {
        let p = ChannelParams::real(1.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(cutset_bound(&p), 0.5 * 3f64.log2(), epsilon = 1e-15);
        assert_relative_eq!(classical_cutset_bound(&p), 0.5 * 3f64.log2(), epsilon = 1e-9);

        let p = ChannelParams::real(2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(cutset_bound(&p), 0.5 * 5f64.log2(), epsilon = 1e-15);
        assert!(classical_cutset_bound(&p) < cutset_bound(&p));
    }

    #[test]
    fn degenerate_links() {
        let p = ChannelParams::real(1.5, 2.0, 1.0, 1.0, 1e-16).unwrap();
        assert_relative_eq!(cutset_bound(&p), direct_rate(&p), epsilon = 1e-7);
        assert_relative_eq!(classical_cutset_bound(&p), direct_rate(&p), epsilon = 1e-7);
        let p = ChannelParams::real(0.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(cutset_bound(&p), direct_rate(&p));
        assert_relative_eq!(classical_cutset_bound(&p), direct_rate(&p), epsilon = 1e-12);
    }
}
