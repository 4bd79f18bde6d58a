#include <catch2/catch_amalgamated.hpp>

#include <regex>

#include "helpers.hpp"

using namespace advkit;

namespace {

AttackReport sample_attack_report() {
    AttackReport r;
    r.mr = 1.0;
    r.acac = 0.9996;
    r.actc = 0.0004;
    r.aldp.l0 = 0.978;
    r.aldp.l1 = 3.3804;
    r.aldp.l2 = 0.1;
    r.aldp.linf = 0.2;
    r.ass = 0.782;
    r.psd = 149.4869;
    r.nte = 0.9991;
    r.rgb = 1.0;
    r.cc = 0.0123;
    r.records = 500;
    r.successes = 500;
    return r;
}

DefenseReport sample_defense_report() {
    DefenseReport r;
    r.acc_raw = 0.9001;
    r.acc_defended = 0.8111;
    r.crr = 0.0392;
    r.csr = 0.1282;
    r.cav = r.crr - r.csr;
    r.ccv = 0.1658;
    r.cos = 0.0683;
    return r;
}

std::vector<std::string> extract_numbers(const std::string& text) {
    std::regex num(R"(-?\d+\.\d+%?)");
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), num);
         it != std::sregex_iterator(); ++it)
        out.push_back(it->str());
    return out;
}

} // namespace

TEST_CASE("attack report csv has the frozen 9-row schema") {
    std::string csv = render_attack_report({{"pgd", sample_attack_report()}},
                                           {"config_hash=abc"}, ReportFormat::csv);
    std::string expected =
        "# config_hash=abc\n"
        "metric,pgd\n"
        "MR,1.000\n"
        "ACAC,1.000\n"
        "ACTC,0.000\n"
        "ALDp,L0=0.978;L1=3.380;L2=0.100;Linf=0.200\n"
        "ASS,0.782\n"
        "PSD,149.487\n"
        "NTE,0.999\n"
        "RGB,1.000\n"
        "CC,0.012\n";
    REQUIRE(csv == expected);
}

TEST_CASE("defense report renders Table-4 style percentages") {
    std::string csv = render_defense_report({{"pat", sample_defense_report()}}, {},
                                            ReportFormat::csv);
    std::string expected =
        "metric,pat\n"
        "ACC_raw,90.01%\n"
        "ACC_defended,81.11%\n"
        "CAV,-8.90%\n"
        "CRR,3.92%\n"
        "CSR,12.82%\n"
        "CCV,16.58%\n"
        "COS,0.0683\n";
    REQUIRE(csv == expected);
}

TEST_CASE("undefined metrics render as n/a") {
    AttackReport r;
    r.mr = 0.0;
    r.cc = 0.001;
    r.records = 5;
    std::string csv = render_attack_report({{"empty", r}}, {}, ReportFormat::csv);
    REQUIRE(csv.find("ACAC,n/a") != std::string::npos);
    REQUIRE(csv.find("ALDp,L0=n/a;L1=n/a;L2=n/a;Linf=n/a") != std::string::npos);
    REQUIRE(csv.find("RGB,n/a") != std::string::npos);

    DefenseReport d;
    d.acc_raw = 0.5;
    d.acc_defended = 0.5;
    std::string dcsv = render_defense_report({{"x", d}}, {}, ReportFormat::csv);
    REQUIRE(dcsv.find("CCV,n/a") != std::string::npos);
    REQUIRE(dcsv.find("COS,n/a") != std::string::npos);
}

TEST_CASE("markdown and csv carry identical numbers") {
    auto attack = sample_attack_report();
    auto defense = sample_defense_report();
    std::string acsv = render_attack_report({{"e", attack}}, {}, ReportFormat::csv);
    std::string amd = render_attack_report({{"e", attack}}, {}, ReportFormat::markdown);
    REQUIRE(extract_numbers(acsv) == extract_numbers(amd));
    std::string dcsv = render_defense_report({{"e", defense}}, {}, ReportFormat::csv);
    std::string dmd = render_defense_report({{"e", defense}}, {}, ReportFormat::markdown);
    REQUIRE(extract_numbers(dcsv) == extract_numbers(dmd));
    REQUIRE(amd.find("| MR |") != std::string::npos);
}

TEST_CASE("multiple experiments become multiple columns") {
    auto r = sample_attack_report();
    std::string csv =
        render_attack_report({{"a", r}, {"b", r}}, {}, ReportFormat::csv);
    REQUIRE(csv.find("metric,a,b") != std::string::npos);
    REQUIRE(csv.find("MR,1.000,1.000") != std::string::npos);
    REQUIRE_THROWS_AS(render_attack_report({}, {}, ReportFormat::csv), InputError);
}
