#include <doctest.h>

#include <random>

#include "fpdetect/psl.hpp"
#include "fpdetect/url.hpp"

using namespace fpdetect;

TEST_CASE("clean_script_url strips scheme, query and fragment") {
    CHECK(clean_script_url("https://duckduckgo.com/a/script.js?q=easyprivacy+list&t=ffab&ia=web") ==
          "duckduckgo.com/a/script.js");
    CHECK(clean_script_url("http://b.com/a/script.js?q=b2") == "b.com/a/script.js");
    CHECK(clean_script_url("https://b.com/a/script.js?q=b1") == "b.com/a/script.js");
    CHECK(clean_script_url("b.com/a/script.js") == "b.com/a/script.js");
    CHECK(clean_script_url("https://a.com/x.js#frag") == "a.com/x.js");
    CHECK(clean_script_url("https://a.com/x.js#frag?notquery") == "a.com/x.js");
    CHECK(clean_script_url("//cdn.a.com/x.js?v=1") == "cdn.a.com/x.js");
}

TEST_CASE("cleaning is idempotent over url-shaped noise") {
    const char* pieces[] = {"https://", "http://", "",     "a.com", "b.org/x", "/p/q.js",
                            "?q=1&r=2", "#frag",   "%20",  "..",    "js",      "::"};
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        std::string url;
        int parts = 1 + int(rng() % 6);
        for (int p = 0; p < parts; ++p) url += pieces[rng() % (sizeof(pieces) / sizeof(*pieces))];
        if (url.empty()) url = "x";
        std::string once = clean_script_url(url);
        CHECK(clean_script_url(once) == once);
        CHECK(once.find('?') == std::string::npos);
        CHECK(once.find('#') == std::string::npos);
        CHECK_FALSE(once.starts_with("http://"));
        CHECK_FALSE(once.starts_with("https://"));
    }
}

TEST_CASE("urls differing only in scheme/query/fragment clean identically") {
    std::string base = "b.com/a/script.js";
    CHECK(clean_script_url("http://" + base + "?q=1") == clean_script_url("https://" + base));
    CHECK(clean_script_url(base + "#x") == clean_script_url("https://" + base + "?a=b#c"));
}

TEST_CASE("url_parts splits host, registrable domain and file name") {
    auto parts = url_parts("https://www.alaskaair.com/px/client/main.min.js?param1=2",
                           PublicSuffixList::bundled());
    REQUIRE(parts);
    CHECK(parts->fqdn == "www.alaskaair.com");
    CHECK(parts->etld1 == "alaskaair.com");
    CHECK(parts->path_end == "main.min.js");
    CHECK(strip_www(parts->fqdn) == "alaskaair.com");

    auto ship = url_parts("https://tpc.googlesyndication.com/sadbundle/123/JavaScripts/Ship.js",
                          PublicSuffixList::bundled());
    REQUIRE(ship);
    CHECK(ship->fqdn == "tpc.googlesyndication.com");
    CHECK(ship->etld1 == "googlesyndication.com");
    CHECK(ship->path_end == "Ship.js");

    auto bare = url_parts("https://a.com/", PublicSuffixList::bundled());
    REQUIRE(bare);
    CHECK(bare->path_end == "");
    CHECK(bare->fqdn == "a.com");

    auto noslash = url_parts("a.com", PublicSuffixList::bundled());
    REQUIRE(noslash);
    CHECK(noslash->path_end == "");
}

TEST_CASE("url_parts rejects unparseable hosts") {
    CHECK_FALSE(url_parts("", PublicSuffixList::bundled()));
    CHECK_FALSE(url_parts("https://", PublicSuffixList::bundled()));
    CHECK_FALSE(url_parts("https:///path/only", PublicSuffixList::bundled()));
    CHECK_FALSE(url_parts("...", PublicSuffixList::bundled()));
}

TEST_CASE("url_parts handles ports, userinfo and host case") {
    auto p = url_parts("https://User@Www.Example.COM:8443/a/b.js", PublicSuffixList::bundled());
    REQUIRE(p);
    CHECK(p->fqdn == "www.example.com");
    CHECK(p->etld1 == "example.com");
    CHECK(p->path_end == "b.js");
}

TEST_CASE("fqdn always ends with etld1 and path_end has no slash") {
    const char* urls[] = {"https://a.b.c.co.uk/x/y.js", "http://single/x.js",
                          "https://deep.sub.kawasaki.jp/f.js", "cdn.github.io/lib.js"};
    for (const char* u : urls) {
        auto p = url_parts(u, PublicSuffixList::bundled());
        REQUIRE(p);
        CHECK(p->fqdn.ends_with(p->etld1));
        CHECK(p->path_end.find('/') == std::string::npos);
    }
}

TEST_CASE("public suffix rules: plain, wildcard, exception, default") {
    const PublicSuffixList& psl = PublicSuffixList::bundled();
    CHECK(psl.registrable_domain("www.alaskaair.com") == "alaskaair.com");
    CHECK(psl.registrable_domain("a.b.co.uk") == "b.co.uk");
    CHECK(psl.public_suffix("a.b.co.uk") == "co.uk");
    // wildcard *.kawasaki.jp
    CHECK(psl.public_suffix("foo.bar.kawasaki.jp") == "bar.kawasaki.jp");
    CHECK(psl.registrable_domain("foo.bar.kawasaki.jp") == "foo.bar.kawasaki.jp");
    // exception !city.kawasaki.jp
    CHECK(psl.public_suffix("sub.city.kawasaki.jp") == "kawasaki.jp");
    CHECK(psl.registrable_domain("sub.city.kawasaki.jp") == "city.kawasaki.jp");
    // exception !www.ck under *.ck
    CHECK(psl.registrable_domain("www.ck") == "www.ck");
    CHECK(psl.registrable_domain("shop.some.ck") == "shop.some.ck");
    // unknown TLD falls back to the implicit * rule
    CHECK(psl.registrable_domain("x.y.unknowntld") == "y.unknowntld");
    // host that is itself a suffix
    CHECK(psl.registrable_domain("com") == "com");
    // private registry entries
    CHECK(psl.registrable_domain("user.github.io") == "user.github.io");
    CHECK(psl.public_suffix("user.github.io") == "github.io");
}

TEST_CASE("bundled snapshot matches the shipped data file") {
    auto from_file = PublicSuffixList::from_file(std::string(FPDETECT_DATA_DIR) +
                                                 "/public_suffix_snapshot.dat");
    CHECK(from_file.rule_count() == PublicSuffixList::bundled().rule_count());
    CHECK(from_file.registrable_domain("a.b.co.uk") ==
          PublicSuffixList::bundled().registrable_domain("a.b.co.uk"));
}
