//! Command-line front end for the cloudiness analysis pipeline.
//!
//! Subcommands: `analyze` (full report), `spectrum` (radial spectrum CSV and
//! optional 2D raster), `fit` (model fit on a spectrum CSV), `synth`
//! (fiber-process simulator), `pyramid` (DoG level table). Exit codes:
//! 0 success, 2 usage error, 3 data error, 4 numerical failure.

use clap::{Args, Parser, Subcommand};
use cloudindex::grammage::{normalize_grammage, pixelwise_mean, GrammageError, GrammageField};
use cloudindex::index::{
    cloudiness_index, directional_cloudiness, range_of_interaction, CloudinessReport,
    FrequencyBand, IndexError, InputProvenance, ModelReport, MspEntry, SectorCli,
};
use cloudindex::io;
use cloudindex::model::{fit_bessel_model, ModelError};
use cloudindex::pyramid::{dog_norm, msp_spatial, DogLevel, PyramidError};
use cloudindex::spectral::{power_spectrum_2d, radial_average, SpectralError};
use cloudindex::synth::{synth_nonwoven, SynthConfig, SynthError};
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cloudindex",
    version,
    about = "Cloudiness analysis of nonwovens from transmission images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full analysis: normalized grammage, spectrum, cloudiness report
    Analyze(AnalyzeArgs),
    /// Estimate and export the radial power spectrum
    Spectrum(SpectrumArgs),
    /// Fit the two-parameter spectrum model to a radial spectrum CSV
    Fit(FitArgs),
    /// Generate a synthetic nonwoven field from the fiber-process model
    Synth(SynthArgs),
    /// DoG pyramid level characteristics and energies
    Pyramid(PyramidArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Physical pixel size in micrometers (not read from image metadata)
    #[arg(long)]
    pixel_size_um: Option<f64>,
    /// Frequency band rho0:rho1 in 1/um (default 0.02:0.10)
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    /// Fit the spectrum model and report the range of interaction
    #[arg(long)]
    fit: bool,
    /// Angular sector phi_lo:phi_hi in radians; repeatable
    #[arg(long = "sectors", value_parser = parse_band_signed, allow_hyphen_values = true)]
    sectors: Vec<(f64, f64)>,
    /// DoG pyramid levels j to evaluate, comma separated (e.g. 9,10,11,12)
    #[arg(long, value_delimiter = ',')]
    pyramid_levels: Vec<i32>,
    /// Key-value config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report output path (JSON); the radial spectrum CSV is written
    /// alongside with suffix _spectrum.csv
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Input images (PGM P2/P5 or grayscale PNG, 8/16-bit)
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    pixel_size_um: f64,
    /// Output CSV path (rho_per_um,k1_um2,count)
    #[arg(short, long)]
    output: PathBuf,
    /// Also export the 2D spectrum as a 32-bit float raster with sidecar
    #[arg(long)]
    raster: Option<PathBuf>,
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Fit band rho0:rho1 in 1/um
    #[arg(long, value_parser = parse_band)]
    band: (f64, f64),
    /// Model JSON output path (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Radial spectrum CSV as written by `spectrum` or `analyze`
    spectrum: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Mean number of fiber segments per mm^2
    #[arg(long)]
    na: f64,
    /// Inverse mean segment length in 1/mm
    #[arg(long)]
    lambda_per_mm: f64,
    /// Fiber radius in um
    #[arg(long)]
    radius_um: f64,
    /// Grid size (square, pixels)
    #[arg(long)]
    size: usize,
    /// Pixel size in um (default 2/3 of the fiber radius)
    #[arg(long)]
    pixel_size_um: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output PGM path; the exact field is also written as <stem>.f32
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PyramidArgs {
    #[arg(long)]
    pixel_size_um: f64,
    /// Levels j, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [9, 10, 11, 12])]
    levels: Vec<i32>,
    /// CSV output path (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    images: Vec<PathBuf>,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s}"))?;
    let lo: f64 = a
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound {a}: {e}"))?;
    let hi: f64 = b
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound {b}: {e}"))?;
    // the negated form also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lo > 0.0) || hi < lo {
        return Err(format!("need 0 < lo <= hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_band_signed(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s}"))?;
    let lo: f64 = a
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound {a}: {e}"))?;
    let hi: f64 = b
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound {b}: {e}"))?;
    if hi <= lo {
        return Err(format!("need lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

/// Error categories mapped to exit codes.
enum AppError {
    /// Unreadable or inconsistent input data (exit 3)
    Data(String),
    /// Numerical failure in the pipeline (exit 4)
    Numerical(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Data(_) => 3,
            AppError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Data(m) | AppError::Numerical(m) => m,
        }
    }
}

impl From<io::IoError> for AppError {
    fn from(e: io::IoError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<GrammageError> for AppError {
    fn from(e: GrammageError) -> Self {
        match e {
            GrammageError::ZeroVariance => AppError::Numerical(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<SpectralError> for AppError {
    fn from(e: SpectralError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<IndexError> for AppError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::BoundExceeded { .. } => AppError::Numerical(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NoConvergence { .. } | ModelError::QuadratureFailure { .. } => {
                AppError::Numerical(e.to_string())
            }
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for AppError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::DegenerateField => AppError::Numerical(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<PyramidError> for AppError {
    fn from(e: PyramidError) -> Self {
        AppError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => run_analyze(args),
        Command::Spectrum(args) => run_spectrum(args),
        Command::Fit(args) => run_fit(args),
        Command::Synth(args) => run_synth(args),
        Command::Pyramid(args) => run_pyramid(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Optional key-value configuration for `analyze`; flags override file
/// values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    pixel_size_um: Option<f64>,
    band: Option<String>,
    fit: Option<bool>,
    sectors: Option<Vec<String>>,
    pyramid_levels: Option<Vec<i32>>,
    output: Option<PathBuf>,
    images: Option<Vec<PathBuf>>,
}

struct LoadedImages {
    fields: Vec<GrammageField>,
    provenance: InputProvenance,
}

/// Load and normalize all images; dimensions must agree.
fn load_images(paths: &[PathBuf], pixel_size_um: f64) -> Result<LoadedImages, AppError> {
    if paths.is_empty() {
        return Err(AppError::Data("no input images given".into()));
    }
    let mut saturated = 0usize;
    // images load and normalize concurrently; result order is preserved
    let results: Vec<Result<(GrammageField, usize), AppError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|path| {
                scope.spawn(move || {
                    let img = io::read_gray_image(path, pixel_size_um)?;
                    let sat = img.saturated_pixels();
                    let field = normalize_grammage(&img)?;
                    Ok((field, sat))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut fields = Vec::with_capacity(paths.len());
    for (path, result) in paths.iter().zip(results) {
        // io errors already name the file; prefix the rest with it
        let prefix = |m: String| {
            let name = path.display().to_string();
            if m.starts_with(&name) {
                m
            } else {
                format!("{name}: {m}")
            }
        };
        let (field, sat) = result.map_err(|e| match e {
            AppError::Data(m) => AppError::Data(prefix(m)),
            AppError::Numerical(m) => AppError::Numerical(prefix(m)),
        })?;
        saturated += sat;
        fields.push(field);
    }
    for (path, field) in paths.iter().zip(&fields).skip(1) {
        if field.width() != fields[0].width() || field.height() != fields[0].height() {
            return Err(AppError::Data(format!(
                "dimension mismatch: {} is {}x{} but {} is {}x{}",
                paths[0].display(),
                fields[0].width(),
                fields[0].height(),
                path.display(),
                field.width(),
                field.height(),
            )));
        }
    }
    if saturated > 0 {
        eprintln!(
            "warning: {saturated} saturated pixels across {} images (possible overexposure)",
            paths.len()
        );
    }
    let provenance = InputProvenance {
        files: paths.iter().map(|p| p.display().to_string()).collect(),
        pixel_size_um,
        image_count: fields.len(),
        width_px: fields[0].width(),
        height_px: fields[0].height(),
        saturated_pixels: saturated,
    };
    Ok(LoadedImages { fields, provenance })
}

fn run_analyze(mut args: AnalyzeArgs) -> Result<(), AppError> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
        if args.pixel_size_um.is_none() {
            args.pixel_size_um = file.pixel_size_um;
        }
        if args.band.is_none() {
            args.band = file
                .band
                .map(|s| parse_band(&s).map_err(AppError::Data))
                .transpose()?;
        }
        if !args.fit {
            args.fit = file.fit.unwrap_or(false);
        }
        if args.sectors.is_empty() {
            for s in file.sectors.unwrap_or_default() {
                args.sectors
                    .push(parse_band_signed(&s).map_err(AppError::Data)?);
            }
        }
        if args.pyramid_levels.is_empty() {
            args.pyramid_levels = file.pyramid_levels.unwrap_or_default();
        }
        if args.output.is_none() {
            args.output = file.output;
        }
        if args.images.is_empty() {
            args.images = file.images.unwrap_or_default();
        }
    }
    let pixel_size_um = args.pixel_size_um.ok_or_else(|| {
        AppError::Data("pixel size is required (--pixel-size-um or config)".into())
    })?;
    let output = args
        .output
        .ok_or_else(|| AppError::Data("output path is required (-o or config)".into()))?;
    let band = match args.band {
        Some((lo, hi)) => FrequencyBand::new(lo, hi)?,
        None => FrequencyBand::default_band(),
    };

    let loaded = load_images(&args.images, pixel_size_um)?;
    let mean_field = pixelwise_mean(&loaded.fields)?;
    let ps = power_spectrum_2d(&mean_field)?;
    let rs = radial_average(&ps);

    let cli_percent = cloudiness_index(&rs, &band)?;
    let sector_clis = if args.sectors.is_empty() {
        Vec::new()
    } else {
        directional_cloudiness(&ps, &args.sectors, &band)?
    };

    let mut model_report = None;
    let mut ri_mm2 = None;
    if args.fit {
        let mut pooled = fit_bessel_model(&rs, &band)?;
        if loaded.fields.len() >= 2 {
            // per-image fits; the reported uncertainty is the standard
            // deviation of the mean of the individual estimates
            let mut lams = Vec::new();
            let mut nus = Vec::new();
            for field in &loaded.fields {
                let rs_i = radial_average(&power_spectrum_2d(field)?);
                let fit_i = fit_bessel_model(&rs_i, &band)?;
                lams.push(fit_i.lambda_per_mm);
                nus.push(fit_i.nu);
            }
            pooled.stderr_lambda_per_mm = Some(stderr_of_mean(&lams));
            pooled.stderr_nu = Some(stderr_of_mean(&nus));
        }
        ri_mm2 = Some(range_of_interaction(&pooled)?);
        model_report = Some(ModelReport {
            lambda_per_mm: pooled.lambda_per_mm,
            nu: pooled.nu,
            fit_residual: pooled.fit_residual,
            stderr_lambda_per_mm: pooled.stderr_lambda_per_mm,
            stderr_nu: pooled.stderr_nu,
        });
    }

    let mut msp = Vec::new();
    for &j in &args.pyramid_levels {
        let level = DogLevel::new(j);
        let value = msp_spatial(&mean_field, &level)?;
        msp.push(MspEntry {
            j,
            value_permille: value * 1000.0,
        });
    }

    let (wl_min, wl_max) = band.wavelengths_um();
    let report = CloudinessReport {
        cli_percent,
        band_rho0_per_um: band.rho0_per_um(),
        band_rho1_per_um: band.rho1_per_um(),
        band_wavelength_min_um: wl_min,
        band_wavelength_max_um: wl_max,
        sectors: args
            .sectors
            .iter()
            .zip(&sector_clis)
            .map(|(&(lo, hi), &cli)| SectorCli {
                phi_lo_rad: lo,
                phi_hi_rad: hi,
                cli_percent: cli,
            })
            .collect(),
        ri_mm2,
        model: model_report,
        msp,
        inputs: loaded.provenance,
    };

    std::fs::write(&output, report.to_json_pretty() + "\n")
        .map_err(|e| AppError::Data(format!("{}: {e}", output.display())))?;
    io::write_radial_csv(&spectrum_sidecar_path(&output), &rs)?;
    println!(
        "CLI = {cli_percent:.2}% over [{}, {}] /um ({} images, {}x{} px)",
        band.rho0_per_um(),
        band.rho1_per_um(),
        report.inputs.image_count,
        report.inputs.width_px,
        report.inputs.height_px
    );
    Ok(())
}

fn spectrum_sidecar_path(report_path: &Path) -> PathBuf {
    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report_path.with_file_name(format!("{stem}_spectrum.csv"))
}

fn stderr_of_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

fn run_spectrum(args: SpectrumArgs) -> Result<(), AppError> {
    let loaded = load_images(&args.images, args.pixel_size_um)?;
    let mean_field = pixelwise_mean(&loaded.fields)?;
    let ps = power_spectrum_2d(&mean_field)?;
    let rs = radial_average(&ps);
    io::write_radial_csv(&args.output, &rs)?;
    if let Some(raster) = &args.raster {
        io::write_spectrum_raster(raster, &ps)?;
    }
    println!(
        "wrote {} radial bins to {}",
        rs.bin_centers().len(),
        args.output.display()
    );
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<(), AppError> {
    let rs = io::read_radial_csv(&args.spectrum)?;
    let band = FrequencyBand::new(args.band.0, args.band.1)?;
    let fitted = fit_bessel_model(&rs, &band)?;
    let ri = range_of_interaction(&fitted)?;
    let json = serde_json::json!({
        "lambda_per_mm": fitted.lambda_per_mm,
        "nu": fitted.nu,
        "fit_residual": fitted.fit_residual,
        "ri_mm2": ri,
        "band_rho0_per_um": band.rho0_per_um(),
        "band_rho1_per_um": band.rho1_per_um(),
    });
    let text = serde_json::to_string_pretty(&json).expect("serialization cannot fail");
    match &args.output {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<(), AppError> {
    let pixel = args.pixel_size_um.unwrap_or(args.radius_um * 2.0 / 3.0);
    let extent = args.size as f64 * pixel;
    let cfg = SynthConfig::new(
        (extent, extent),
        (args.size, args.size),
        args.na,
        args.lambda_per_mm,
        args.radius_um,
        args.seed,
    )?;
    let field = synth_nonwoven(&cfg)?;

    // 16-bit PGM affine-rescaled onto [1, 65535] so the gray values stay
    // strictly positive for re-analysis; exact values go to the f32 raster
    let (lo, hi) = field
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = (hi - lo) / 65534.0;
    let offset = lo - scale; // field value = offset + scale * gray
    let pgm: Vec<u16> = field
        .values()
        .iter()
        .map(|&v| (1.0 + (v - lo) / scale).round().clamp(1.0, 65535.0) as u16)
        .collect();
    io::write_pgm16(&args.output, field.width(), field.height(), &pgm)?;
    let meta = [
        ("pixel_size_um", format!("{pixel}")),
        ("gray_offset", format!("{offset}")),
        ("gray_scale", format!("{scale}")),
        ("curves_per_mm2", format!("{}", args.na)),
        ("lambda_per_mm", format!("{}", args.lambda_per_mm)),
        ("radius_um", format!("{}", args.radius_um)),
        ("rng", "ChaCha12".to_string()),
        ("seed", format!("{}", args.seed)),
    ];
    let sidecar: String = meta.iter().fold(
        format!(
            "width_px = {}\nheight_px = {}\n",
            field.width(),
            field.height()
        ),
        |mut acc, (k, v)| {
            let _ = writeln!(acc, "{k} = {v}");
            acc
        },
    );
    let sidecar_path = {
        let mut name = args.output.as_os_str().to_os_string();
        name.push(".txt");
        PathBuf::from(name)
    };
    std::fs::write(&sidecar_path, sidecar)
        .map_err(|e| AppError::Data(format!("{}: {e}", sidecar_path.display())))?;

    let f32_path = args.output.with_extension("f32");
    let exact: Vec<f32> = field.values().iter().map(|&v| v as f32).collect();
    let meta_ref: Vec<(&str, String)> = meta.iter().map(|(k, v)| (*k, v.clone())).collect();
    io::write_f32_raster(&f32_path, field.width(), field.height(), &exact, &meta_ref)?;
    println!(
        "wrote {}x{} field to {} (exact raster: {})",
        field.width(),
        field.height(),
        args.output.display(),
        f32_path.display()
    );
    Ok(())
}

fn run_pyramid(args: PyramidArgs) -> Result<(), AppError> {
    let loaded = load_images(&args.images, args.pixel_size_um)?;
    let mean_field = pixelwise_mean(&loaded.fields)?;
    let mut csv = String::from("j,sigma_um,rho_max_per_um,norm_per_mm,msp_permille\n");
    for &j in &args.levels {
        let level = DogLevel::new(j);
        let msp = msp_spatial(&mean_field, &level)?;
        let _ = writeln!(
            csv,
            "{j},{},{},{},{}",
            level.sigma_um(),
            level.rho_max_per_um(),
            dog_norm(&level) * 1000.0,
            msp * 1000.0
        );
    }
    match &args.output {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}
