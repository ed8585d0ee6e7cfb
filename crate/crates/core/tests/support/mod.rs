pub mod transport_lp;
