#!/usr/bin/env python3
"""Regenerates the bundled sample dataset under crates/core/data.

Format lists are ordered by popularity (most popular first). Compatibility
grids are drawn so that popular formats are rendered by many applications
and tail formats by few. The output is deterministic.
"""

import math
import os
import random

ROOT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")

FORMATS = {
    "audio": """mp3 wav aac flac ogg wma m4a aiff alac opus amr ape au mid midi ra ac3
        dts mka m4b m4p mpc tta wv caf aif gsm dss voc vox snd 8svx oga spx mod xm it
        s3m pcm mp2 mpa dsf dff sd2 qcp 3ga awb weba m4r nsf""",
    "image": """jpg png gif bmp tiff webp heic svg psd raw cr2 nef arw dng ico tga eps
        ai pcx jp2 exr hdr dds xcf pict pbm pgm ppm xbm xpm wmf emf cdr orf rw2 pef
        srw raf sgi ras jxr avif jfif icns pnm dcx cur pdn kra ora""",
    "text": """txt doc docx pdf rtf odt html xml md tex csv epub mobi wpd wps pages xps
        djvu chm log json yaml ini rst sxw abw lwp wri pdb azw fb2 lit tcr oxps dot dotx
        ott xhtml htm sgml nfo asc msg eml vcf ics srt sub tsv docm""",
    "video": """mp4 avi mkv mov wmv flv webm mpg mpeg m4v 3gp ogv ts mts m2ts vob rm
        rmvb asf divx f4v dv mxf m2v 3g2 swf ogm nsv yuv amv roq svi mjpeg h264 hevc
        tod dvr-ms wtv bik smk r3d braw qt mpv m1v evo ivf gxf nut vro""",
}

APPS = {
    "windows": {
        "audio": ["Windows Media Player", "Groove Music", "VLC", "foobar2000", "Winamp",
                  "AIMP", "MediaMonkey", "MusicBee", "Audacity", "iTunes", "PotPlayer",
                  "Adobe Audition"],
        "image": ["Photos", "Paint", "IrfanView", "XnView", "GIMP", "Photoshop",
                  "Paint.NET", "FastStone", "Lightroom", "Inkscape", "ACDSee", "CorelDRAW"],
        "text": ["Notepad", "WordPad", "Microsoft Word", "LibreOffice Writer",
                 "Adobe Acrobat Reader", "SumatraPDF", "Notepad++", "Calibre",
                 "Foxit Reader", "WPS Office", "Visual Studio Code", "Microsoft Edge"],
        "video": ["Movies & TV", "Windows Media Player", "VLC", "PotPlayer", "MPC-HC",
                  "KMPlayer", "GOM Player", "Adobe Premiere Pro", "DaVinci Resolve",
                  "HandBrake", "MPC-BE", "RealPlayer"],
    },
    "apple": {
        "audio": ["Apple Music", "QuickTime Player", "VLC", "Audacity", "Swinsian", "Vox",
                  "Elmedia Player", "IINA", "Logic Pro", "GarageBand", "Fission",
                  "Adobe Audition"],
        "image": ["Preview", "Photos", "GIMP", "Photoshop", "Pixelmator Pro",
                  "Affinity Photo", "Lightroom", "Inkscape", "XnView MP",
                  "GraphicConverter", "Sketch", "Illustrator"],
        "text": ["TextEdit", "Pages", "Microsoft Word", "LibreOffice Writer", "Preview",
                 "Adobe Acrobat Reader", "BBEdit", "Calibre", "Apple Books", "Safari",
                 "Visual Studio Code", "Nisus Writer"],
        "video": ["QuickTime Player", "VLC", "IINA", "Elmedia Player", "Final Cut Pro",
                  "iMovie", "DaVinci Resolve", "Adobe Premiere Pro", "HandBrake", "Infuse",
                  "mpv", "Movist"],
    },
    "linux": {
        "audio": ["Rhythmbox", "VLC", "Audacity", "Clementine", "Amarok", "Audacious",
                  "Strawberry", "Lollypop", "mpv", "Ardour", "DeaDBeeF", "SMPlayer"],
        "image": ["GIMP", "Eye of GNOME", "gThumb", "Shotwell", "Krita", "Inkscape",
                  "digiKam", "darktable", "RawTherapee", "XnView MP", "Gwenview", "feh"],
        "text": ["gedit", "LibreOffice Writer", "Evince", "Okular", "Calibre", "AbiWord",
                 "Vim", "Kate", "Firefox", "Zathura", "Visual Studio Code", "FBReader"],
        "video": ["VLC", "mpv", "Totem", "SMPlayer", "Kdenlive", "Shotcut", "OpenShot",
                  "DaVinci Resolve", "HandBrake", "Celluloid", "Dragon Player", "Parole"],
    },
}

OSES = ["windows", "apple", "linux"]
TYPES = ["audio", "image", "text", "video"]


def main():
    rng = random.Random(20131029)
    for sub in ["formats", "apps", "compat"]:
        os.makedirs(os.path.join(ROOT, sub), exist_ok=True)
    for t in TYPES:
        formats = FORMATS[t].split()
        assert len(formats) == 50 and len(set(formats)) == 50, (t, len(formats))
        with open(os.path.join(ROOT, "formats", f"{t}.txt"), "w") as fh:
            fh.write("\n".join(formats) + "\n")
        columns = []
        for os_name in OSES:
            apps = APPS[os_name][t]
            assert len(apps) >= 10
            with open(os.path.join(ROOT, "apps", f"{os_name}_{t}.txt"), "w") as fh:
                fh.write("\n".join(apps) + "\n")
            # earlier entries are the mainstream, broad-coverage applications
            columns += [0.45 + 0.55 * math.exp(-k / 6.0) for k in range(len(apps))]
        rows = []
        for i in range(len(formats)):
            base = 0.93 * math.exp(-i / 11.0) + 0.04
            row = [1 if rng.random() < breadth * base else 0 for breadth in columns]
            if not any(row):
                row[rng.randrange(len(row))] = 1
            rows.append(row)
        with open(os.path.join(ROOT, "compat", f"{t}.csv"), "w") as fh:
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")


if __name__ == "__main__":
    main()
