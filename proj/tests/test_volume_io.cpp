#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fetaval/manifest.hpp"
#include "fetaval/subset.hpp"
#include "fetaval/volume_io.hpp"

using namespace fetaval;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("fetaval_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

LabelVolume random_volume(std::uint64_t seed, Dims d, Spacing s = {0.8, 0.8, 0.8}) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> code(0, 7);
    std::vector<std::uint8_t> v(d.voxel_count());
    for (auto& x : v) x = static_cast<std::uint8_t>(code(rng));
    return LabelVolume(d, s, std::move(v), "vol");
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const char* data, std::size_t n) {
    std::ofstream f(p, std::ios::binary);
    f.write(data, static_cast<std::streamsize>(n));
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::phantom;
}

}  // namespace

TEST(LabelVolume, RejectsCodesOutsideAlphabet) {
    EXPECT_EQ(kind_of([] { LabelVolume(Dims{1, 1, 2}, Spacing{}, {0, 8}); }), ErrorKind::alphabet);
    EXPECT_EQ(kind_of([] { LabelVolume(Dims{1, 1, 2}, Spacing{}, {0}); }), ErrorKind::format);
}

TEST(Nifti, RoundTripUint8) {
    const auto dir = scratch("u8");
    const auto vol = random_volume(1, Dims{5, 4, 3});
    for (const char* name : {"a.nii", "a.nii.gz"}) {
        nifti::write(dir / name, vol);
        const auto back = nifti::read(dir / name);
        EXPECT_EQ(back.dims(), vol.dims());
        EXPECT_TRUE(spacing_close(back.spacing(), vol.spacing()));
        EXPECT_TRUE(std::equal(back.voxels().begin(), back.voxels().end(), vol.voxels().begin()));
        EXPECT_EQ(back.case_id(), "a");
    }
}

TEST(Nifti, StoredTypesEndiannessAndScaling) {
    const auto dir = scratch("types");
    const auto vol = random_volume(2, Dims{3, 3, 3}, Spacing{0.5, 1.0, 2.0});
    std::vector<double> v(vol.voxels().begin(), vol.voxels().end());
    for (auto dt : {nifti::int8, nifti::int16, nifti::uint16, nifti::int32, nifti::float32}) {
        for (bool be : {false, true}) {
            nifti::WriteOptions o;
            o.datatype = dt;
            o.big_endian = be;
            nifti::write_values(dir / "t.nii.gz", vol.dims(), vol.spacing(), v, o);
            const auto back = nifti::read(dir / "t.nii.gz");
            EXPECT_TRUE(std::equal(back.voxels().begin(), back.voxels().end(), vol.voxels().begin())) << dt << ' ' << be;
            EXPECT_DOUBLE_EQ(back.spacing().sz, 2.0);
        }
    }
    // stored = (code - 1) / 0.5  →  code = stored * 0.5 + 1
    std::vector<double> stored;
    for (double x : v) stored.push_back((x - 1.0) / 0.5);
    nifti::WriteOptions o;
    o.datatype = nifti::int16;
    o.scl_slope = 0.5f;
    o.scl_inter = 1.0f;
    nifti::write_values(dir / "s.nii", vol.dims(), vol.spacing(), stored, o);
    const auto back = nifti::read(dir / "s.nii");
    EXPECT_TRUE(std::equal(back.voxels().begin(), back.voxels().end(), vol.voxels().begin()));
}

TEST(Nifti, NonIntegralAndOutOfAlphabetValues) {
    const auto dir = scratch("bad");
    nifti::WriteOptions f;
    f.datatype = nifti::float32;
    std::vector<double> frac{0.0, 1.5};
    nifti::write_values(dir / "f.nii", Dims{2, 1, 1}, Spacing{}, frac, f);
    EXPECT_EQ(kind_of([&] { nifti::read(dir / "f.nii"); }), ErrorKind::data);

    nifti::WriteOptions i;
    i.datatype = nifti::int16;
    std::vector<double> big{0.0, 3.0, 42.0, -1.0};
    nifti::write_values(dir / "b.nii", Dims{4, 1, 1}, Spacing{}, big, i);
    EXPECT_EQ(kind_of([&] { nifti::read(dir / "b.nii"); }), ErrorKind::alphabet);

    LoadOptions permissive;
    permissive.strict_labels = false;
    std::string warning;
    permissive.warn = [&](const std::string& m) { warning = m; };
    const auto vol = nifti::read(dir / "b.nii", permissive);
    EXPECT_EQ(std::vector<std::uint8_t>(vol.voxels().begin(), vol.voxels().end()), (std::vector<std::uint8_t>{0, 3, 0, 0}));
    EXPECT_NE(warning.find("2 voxels"), std::string::npos);
}

TEST(Nifti, HeaderImagePair) {
    const auto dir = scratch("pair");
    const auto vol = random_volume(3, Dims{4, 3, 2});
    nifti::write(dir / "single.nii", vol);
    auto bytes = read_bytes(dir / "single.nii");
    std::vector<char> hdr(bytes.begin(), bytes.begin() + 348);
    std::memcpy(hdr.data() + 344, "ni1\0", 4);
    const float zero = 0.0f;
    std::memcpy(hdr.data() + 108, &zero, 4);
    write_bytes(dir / "pair.hdr", hdr.data(), hdr.size());
    write_bytes(dir / "pair.img", bytes.data() + 352, bytes.size() - 352);
    const auto back = nifti::read(dir / "pair.hdr");
    EXPECT_TRUE(std::equal(back.voxels().begin(), back.voxels().end(), vol.voxels().begin()));
    EXPECT_EQ(back.case_id(), "pair");
}

TEST(Nifti, MalformedFilesAreFormatErrors) {
    const auto dir = scratch("malformed");
    write_bytes(dir / "short.nii", "abc", 3);
    EXPECT_EQ(kind_of([&] { nifti::read(dir / "short.nii"); }), ErrorKind::format);

    nifti::write(dir / "ok.nii", random_volume(4, Dims{3, 3, 3}));
    auto bytes = read_bytes(dir / "ok.nii");
    auto trunc = bytes;
    trunc.resize(trunc.size() - 5);
    write_bytes(dir / "trunc.nii", trunc.data(), trunc.size());
    EXPECT_EQ(kind_of([&] { nifti::read(dir / "trunc.nii"); }), ErrorKind::format);

    auto magic = bytes;
    std::memcpy(magic.data() + 344, "xyz\0", 4);
    write_bytes(dir / "magic.nii", magic.data(), magic.size());
    EXPECT_EQ(kind_of([&] { nifti::read(dir / "magic.nii"); }), ErrorKind::format);

    EXPECT_EQ(kind_of([&] { nifti::read(dir / "missing.nii"); }), ErrorKind::io);
}

TEST(RawFormat, RoundTripAndDispatch) {
    const auto dir = scratch("raw");
    const auto vol = random_volume(5, Dims{3, 2, 4}, Spacing{0.1, 0.2, 0.30000000000000004});
    save_label_volume(dir / "v.lv", vol);
    const auto back = load_label_volume(dir / "v.lv");
    EXPECT_EQ(back.spacing(), vol.spacing());
    EXPECT_TRUE(std::equal(back.voxels().begin(), back.voxels().end(), vol.voxels().begin()));
    save_label_volume(dir / "v.nii.gz", vol);
    EXPECT_EQ(load_label_volume(dir / "v.nii.gz").dims(), vol.dims());
}

TEST(RawFormat, RejectsBadStreams) {
    std::istringstream a("LV2 1 1 1 1 1 1 0");
    EXPECT_EQ(kind_of([&] { raw::read(a, "a"); }), ErrorKind::format);
    std::istringstream b("LV1 2 1 1 1 1 1 0");
    EXPECT_EQ(kind_of([&] { raw::read(b, "b"); }), ErrorKind::format);
    std::istringstream c("LV1 1 1 1 1 1 1 9");
    EXPECT_EQ(kind_of([&] { raw::read(c, "c"); }), ErrorKind::alphabet);
}

TEST(Grid, SameGridCheck) {
    const auto a = random_volume(6, Dims{3, 3, 3}, Spacing{1, 1, 1});
    const auto b = random_volume(6, Dims{3, 3, 3}, Spacing{1, 1, 1.5});
    const auto c = random_volume(6, Dims{3, 3, 4}, Spacing{1, 1, 1});
    EXPECT_NO_THROW(require_same_grid(a, a));
    EXPECT_EQ(kind_of([&] { require_same_grid(a, b); }), ErrorKind::shape);
    EXPECT_EQ(kind_of([&] { require_same_grid(a, c); }), ErrorKind::shape);
}

TEST(Labels, ParseNamesAndCodes) {
    EXPECT_EQ(parse_tissue("GM"), Tissue::gm);
    EXPECT_EQ(parse_tissue("wm"), Tissue::wm);
    EXPECT_EQ(parse_tissue("deepGM"), Tissue::deep_gm);
    EXPECT_EQ(parse_tissue("7"), Tissue::brainstem);
    EXPECT_FALSE(parse_tissue("liver"));
    EXPECT_EQ(name(Tissue::ecsf), "eCSF");
}

TEST(Manifest, ParsesSectionsAndResolvesPaths) {
    std::istringstream in(
        "case_id,gt_path,institution,domain,ga_weeks,pathology,quality,sr_method\n"
        "c1,gt/c1.nii.gz,Kispi,in,25.5,normal,excellent,irtk_simple\n"
        "c2,/abs/c2.nii.gz,UCSF,out_of_domain,31,pathological,1,niftymic\n"
        "\n"
        "team_id,case_id,prediction_path\n"
        "A,c1,pred/A/c1.nii.gz\n"
        "A,c2,pred/A/c2.nii.gz\n");
    ManifestParser p("/data");
    p.parse(in, "m.csv");
    const Manifest m = p.finish();
    ASSERT_EQ(m.gt_entries.size(), 2u);
    EXPECT_EQ(m.gt_entries[0].gt_path, fs::path("/data/gt/c1.nii.gz"));
    EXPECT_EQ(m.gt_entries[1].gt_path, fs::path("/abs/c2.nii.gz"));
    EXPECT_EQ(m.gt_entries[0].meta.quality, 3);
    EXPECT_EQ(m.gt_entries[1].meta.domain, Domain::out_of_domain);
    EXPECT_EQ(m.gt_entries[1].meta.pathology, Pathology::pathological);
    EXPECT_EQ(m.team_entries[1].prediction_path, fs::path("/data/pred/A/c2.nii.gz"));
    EXPECT_EQ(m.team_ids(), (std::vector<std::string>{"A"}));
}

TEST(Manifest, PredictionRootOverridesBase) {
    std::istringstream in(
        "case_id,gt_path,institution,domain,ga_weeks,pathology,quality,sr_method\n"
        "c1,gt/c1.nii.gz,Vienna,in,25,normal,2,mialsrtk\n"
        "team_id,case_id,prediction_path\n"
        "A,c1,A/c1.nii.gz\n");
    ManifestParser p("/data");
    p.set_prediction_root("/preds");
    p.parse(in, "m.csv");
    const Manifest m = p.finish();
    EXPECT_EQ(m.gt_entries[0].gt_path, fs::path("/data/gt/c1.nii.gz"));
    EXPECT_EQ(m.team_entries[0].prediction_path, fs::path("/preds/A/c1.nii.gz"));
}

TEST(Manifest, RowErrorsNameTheRow) {
    const std::string header = "case_id,gt_path,institution,domain,ga_weeks,pathology,quality,sr_method\n";
    auto error_of = [](const std::string& text) -> std::string {
        std::istringstream in(text);
        ManifestParser p;
        try {
            p.parse(in, "m.csv");
            p.finish();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::manifest);
            return e.what();
        }
        return "";
    };
    EXPECT_NE(error_of(header + "c1,a,Kispi,out,25,normal,2,niftymic\n").find("row 2"), std::string::npos);
    EXPECT_NE(error_of(header + "c1,a,Kispi,in,25,normal,4,niftymic\n").find("quality"), std::string::npos);
    EXPECT_NE(error_of(header + "c1,a,Mars,in,25,normal,2,niftymic\n").find("institution"), std::string::npos);
    EXPECT_NE(error_of(header + "c1,a,Kispi,in,x,normal,2,niftymic\n").find("ga_weeks"), std::string::npos);
    EXPECT_NE(error_of(header + "c1,a,Kispi,in,25,normal,2,niftymic\nc1,b,Kispi,in,25,normal,2,niftymic\n").find("duplicate"),
              std::string::npos);
    EXPECT_NE(error_of(header + "c1,a,Kispi,in,25,normal,2,niftymic\nteam_id,case_id,prediction_path\nA,c9,p\n")
                  .find("unknown case"),
              std::string::npos);
    EXPECT_NE(error_of(header + "c1,a,Kispi,in,25,normal,2,niftymic\nteam_id,case_id,prediction_path\nA,c1,p\nA,c1,q\n")
                  .find("duplicate prediction"),
              std::string::npos);
    EXPECT_NE(error_of("c1,a,Kispi,in,25,normal,2,niftymic\n").find("expected header"), std::string::npos);
}

TEST(Manifest, QuotedFieldsAndEscaping) {
    const auto f = csv::split_line("a,\"b,c\",\"d\"\"e\"");
    EXPECT_EQ(f, (std::vector<std::string>{"a", "b,c", "d\"e"}));
    EXPECT_EQ(csv::escape("x,y"), "\"x,y\"");
    EXPECT_EQ(csv::escape("plain"), "plain");
}

TEST(Manifest, MedianQuality) {
    const std::vector<int> odd{3, 1, 2}, even{3, 2, 1, 3}, one{2};
    EXPECT_EQ(median_quality(odd), 2);
    EXPECT_EQ(median_quality(even), 2);
    EXPECT_EQ(median_quality(one), 2);
}

TEST(Subset, ParseDescribeAndSelect) {
    const SubsetFilter f = parse_subset("domain=out; quality=excellent; tissue=GM,WM");
    EXPECT_EQ(f.describe(), "domain=out_of_domain;quality=3;tissue=GM,WM");
    EXPECT_EQ(f.slug(), "domain-out_of_domain_quality-3_tissue-GM+WM");
    CaseMetadata m{"c", "UCSF", Domain::out_of_domain, 30, Pathology::normal, 3, "niftymic"};
    EXPECT_TRUE(f.selects(m, Tissue::gm));
    EXPECT_FALSE(f.selects(m, Tissue::ecsf));
    m.quality = 2;
    EXPECT_FALSE(f.selects(m, Tissue::gm));
    EXPECT_TRUE(parse_subset("all").empty());
    EXPECT_EQ(parse_subset("").describe(), "all");
    EXPECT_EQ(parse_subset("sr_method=irtk_simple").describe(), "sr_method=irtk_simple");
    EXPECT_EQ(parse_subset("institution=kispi,chuv").describe(), "institution=CHUV,Kispi");
}

TEST(Subset, BadPredicatesAreUsageErrors) {
    for (const char* s : {"domain", "colour=red", "tissue=background", "quality=7", "pathology=odd"})
        EXPECT_EQ(kind_of([&] { parse_subset(s); }), ErrorKind::usage) << s;
}
