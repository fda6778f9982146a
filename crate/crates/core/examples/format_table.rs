//! Prints the limits of both formats and every positive finite E4M3 value.
//!
//!     cargo run --example format_table

use fp8::{enumerate, ClassKind, Fp8Format, Sign};

fn main() {
    for f in [Fp8Format::E4M3, Fp8Format::E5M2] {
        let l = f.limits();
        println!(
            "{}: bias {}, max normal {}, min normal {}, max subnormal {}, min subnormal {}, {} binades",
            f.name(),
            l.exponent_bias,
            l.max_normal,
            l.min_normal,
            l.max_subnormal,
            l.min_subnormal,
            f.binade_count()
        );
    }

    println!("\npositive E4M3 values:");
    for e in enumerate(Fp8Format::E4M3) {
        if e.class.sign == Sign::Pos && e.class.kind != ClassKind::NaN {
            println!("  0x{:02X}  {:>12}  {:?}", e.bits, e.value, e.class.kind);
        }
    }
}
