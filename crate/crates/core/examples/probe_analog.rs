//! Scratch probe: which analog stage drives the proposed-vs-alignment gap?

use relaybeam::channel::{mmwave_channel, ChannelKind, ChannelSet, HopChannel};
use relaybeam::designer::{design, Algorithm, DesignRequest};
use relaybeam::matdecomp::CMat;
use relaybeam::rng::stream;
use relaybeam::structopt::ObjectiveSpec;
use relaybeam::sysmodel::{linear_mse, NetworkConfig, NodeConfig};

fn main() {
    let antennas = [16usize, 16, 16, 8];
    let snrs = [0.0f64, 10.0, 20.0, 30.0];
    let trials = 40;
    for snr in snrs {
        let sigma_n2 = 1.0 / 10f64.powf(snr / 10.0);
        let nodes: Vec<NodeConfig> = antennas.iter().map(|&a| NodeConfig { n_t: a, n_r: a, n_rf: 4 }).collect();
        let cfg = NetworkConfig { nodes, streams: 4, power: vec![1.0; 3], noise: vec![sigma_n2; 3], sigma0_sq: 1.0 };
        let mut se_prop = 0.0;
        let mut se_uma = 0.0;
        let mut se_fd = 0.0;
        for t in 0..trials {
            let mut rng = stream(7000 + t, &[0]);
            let hops: Vec<HopChannel> = (0..3).map(|k| {
                let (h, txa, rxa) = mmwave_channel(antennas[k + 1], antennas[k], 10, &mut rng);
                let mut hop = HopChannel::new(h, CMat::zeros(antennas[k], antennas[k])).unwrap();
                hop.tx_angles = txa;
                hop.rx_angles = rxa;
                hop
            }).collect();
            let set = ChannelSet::new(hops).unwrap();
            for (alg, acc) in [(Algorithm::Proposed, &mut se_prop), (Algorithm::Uma, &mut se_uma), (Algorithm::FullDigital, &mut se_fd)] {
                let req = DesignRequest::new(&cfg, &set, ObjectiveSpec::capacity(), alg, ChannelKind::Mmwave);
                let d = design(&req).unwrap();
                *acc += linear_mse(&cfg, &d, &set).unwrap().spectral_efficiency;
            }
        }
        println!(
            "snr {snr:>4}: fd {:.3}  proposed {:.3}  uma {:.3}",
            se_fd / trials as f64,
            se_prop / trials as f64,
            se_uma / trials as f64
        );
    }
}
