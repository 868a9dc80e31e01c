use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub figure: &'static str,
    pub description: &'static str,
}

pub const CATALOG: [CatalogEntry; 7] = [
    CatalogEntry {
        name: "estimate-rmse",
        figure: "Fig. 2 analogue",
        description: "single-path angle and gain estimation RMSE against the closed-form MSE, versus SNR",
    },
    CatalogEntry {
        name: "se-vs-snr",
        figure: "Fig. 3 analogue",
        description: "DL/UL sum rate of A-MF, A-ZF and A-MMSE versus SNR, closed form and genie-aided",
    },
    CatalogEntry {
        name: "se-vs-aps",
        figure: "Fig. 4a analogue",
        description: "average DL spectral efficiency versus number of APs at a fixed total antenna count",
    },
    CatalogEntry {
        name: "se-vs-antennas",
        figure: "Fig. 4b analogue",
        description: "average DL spectral efficiency versus antennas per AP at a fixed number of APs",
    },
    CatalogEntry {
        name: "maxmin",
        figure: "Figs. 5-6 analogue",
        description: "bisection trace and per-user rates under equal, water-filling and max-min control, cell-free and user-centric",
    },
    CatalogEntry {
        name: "ee-vs-aps",
        figure: "Fig. 6 (energy) analogue",
        description: "energy efficiency of cell-free and user-centric operation versus number of APs",
    },
    CatalogEntry {
        name: "cdf",
        figure: "Fig. 7 analogue",
        description: "empirical CDF of per-user DL rates under each power-control policy",
    },
];

pub fn render_text() -> String {
    CATALOG
        .iter()
        .map(|e| format!("{} → {}: {}\n", e.name, e.figure, e.description))
        .collect()
}

pub fn render_json() -> String {
    serde_json::to_string_pretty(&CATALOG.to_vec()).expect("catalog serializes")
}
