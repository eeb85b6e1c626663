//! Periodic table subset used by the SMILES/SMARTS readers.

const SYMBOLS: [&str; 87] = [
    "*", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn",
];

pub fn symbol(atomic_number: u8) -> &'static str {
    SYMBOLS.get(atomic_number as usize).copied().unwrap_or("*")
}

pub fn from_symbol(sym: &str) -> Option<u8> {
    SYMBOLS.iter().position(|s| *s == sym).map(|p| p as u8)
}

/// Elements that may appear without brackets in SMILES.
pub fn is_organic_subset(atomic_number: u8) -> bool {
    matches!(atomic_number, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
}

/// Elements that may be written as lowercase aromatic symbols.
pub fn can_be_aromatic(atomic_number: u8) -> bool {
    matches!(atomic_number, 5 | 6 | 7 | 8 | 15 | 16 | 33 | 34)
}

/// Default valence states, in increasing order.
pub fn default_valences(atomic_number: u8) -> &'static [u8] {
    match atomic_number {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3, 5],
        8 => &[2],
        9 => &[1],
        14 => &[4],
        15 => &[3, 5],
        16 => &[2, 4, 6],
        17 => &[1],
        33 => &[3, 5],
        34 => &[2, 4, 6],
        35 => &[1],
        53 => &[1, 3, 5],
        _ => &[],
    }
}

/// Valences for a charged atom, using the isoelectronic neutral element
/// (N+ behaves like C, O- like F).
pub fn charged_valences(atomic_number: u8, charge: i8) -> &'static [u8] {
    if charge == 0 {
        return default_valences(atomic_number);
    }
    let shifted = atomic_number as i16 - charge as i16;
    if !(1..=86).contains(&shifted) {
        return &[];
    }
    // Only shift within the organic block; metals keep no defaults.
    if !matches!(atomic_number, 5..=9 | 14..=17 | 33..=35 | 53) {
        return &[];
    }
    default_valences(shifted as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_round_trip() {
        for z in 1..=86u8 {
            assert_eq!(from_symbol(symbol(z)), Some(z));
        }
        assert_eq!(from_symbol("Xx"), None);
    }

    #[test]
    fn charged_valence_is_isoelectronic() {
        assert_eq!(charged_valences(7, 1), &[4]);
        assert_eq!(charged_valences(8, -1), &[1]);
        assert_eq!(charged_valences(8, 1), &[3, 5]);
    }
}
